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

#include "repcond/diffmath/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "repcond/errors.hpp"

namespace repcond::diffmath {

CosineSchedule::CosineSchedule(int steps, double offset) {
    if (steps < 2) throw ParameterError("schedule needs at least 2 steps, got " + std::to_string(steps));
    auto f = [&](double tau) {
        const double c = std::cos((tau + offset) / (1.0 + offset) * std::numbers::pi / 2);
        return c * c;
    };
    double prev = 1.0;
    for (int k = 0; k < steps; ++k) {
        const double target = f((k + 1.0) / steps) / f(0.0);
        const double b = std::clamp(1.0 - target / prev, 1e-8, 0.999);
        prev *= 1.0 - b;
        beta_.push_back(b);
        alpha_bar_.push_back(prev);
    }
}

double CosineSchedule::alpha_bar(int k) const {
    if (k < 0 || k >= steps()) throw ParameterError("step index " + std::to_string(k) + " outside the schedule");
    return alpha_bar_[static_cast<std::size_t>(k)];
}

double CosineSchedule::beta(int k) const {
    if (k < 0 || k >= steps()) throw ParameterError("step index " + std::to_string(k) + " outside the schedule");
    return beta_[static_cast<std::size_t>(k)];
}

std::vector<int> CosineSchedule::strided(int count) const {
    const int t = steps();
    if (count < 1 || count > t) {
        throw ParameterError("step count " + std::to_string(count) + " outside [1, " + std::to_string(t) + "]");
    }
    std::vector<int> out;
    for (int j = count - 1; j >= 0; --j) {
        const int k = count == 1 ? t - 1 : static_cast<int>(std::lround(static_cast<double>(j) * (t - 1) / (count - 1)));
        if (out.empty() || out.back() != k) out.push_back(k);
    }
    return out;
}

} // namespace repcond::diffmath
