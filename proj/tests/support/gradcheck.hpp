/*
 * Copyright 2026 The repcond Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "repcond/diffmath/ops.hpp"
#include "repcond/diffmath/tape.hpp"

namespace repcond::testing {

using diffmath::Array;
using diffmath::Tape;
using diffmath::Var;

using LossBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Relative error with a magnitude floor so entries whose true derivative is
/// zero are compared absolutely.
inline double relative_error(double analytic, double numeric, double floor = 1e-5) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

/// Maximum relative error between reverse-mode gradients and central finite
/// differences (step h) over every entry of every input.
inline double max_gradient_error(const LossBuilder& build, const std::vector<Array>& inputs,
                                 double h = 1e-5) {
    std::vector<Array> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        for (const auto& a : inputs) vars.push_back(tape.variable(a));
        Var loss = build(tape, vars);
        tape.backward(loss);
        for (const auto& v : vars) analytic.push_back(tape.grad(v));
    }
    auto eval = [&](const std::vector<Array>& xs) {
        Tape tape(diffmath::GradMode::Disabled);
        std::vector<Var> vars;
        for (const auto& a : xs) vars.push_back(tape.constant(a));
        return build(tape, vars).value().item();
    };
    double worst = 0.0;
    std::vector<Array> work = inputs;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            const double x0 = inputs[k][i];
            work[k][i] = x0 + h;
            const double fp = eval(work);
            work[k][i] = x0 - h;
            const double fm = eval(work);
            work[k][i] = x0;
            const double numeric = (fp - fm) / (2.0 * h);
            worst = std::max(worst, relative_error(analytic[k][i], numeric));
        }
    }
    return worst;
}

} // namespace repcond::testing
