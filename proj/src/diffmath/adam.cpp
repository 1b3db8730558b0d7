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

#include "repcond/diffmath/adam.hpp"

#include <cmath>

namespace repcond::diffmath {

void Adam::step(ParamStore& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (const auto& name : params.names()) {
        auto& e = params.entry(name);
        if (!e.trainable) {
            continue;
        }
        auto [mit, mnew] = m_.try_emplace(name, Array::zeros_like(e.value));
        auto [vit, vnew] = v_.try_emplace(name, Array::zeros_like(e.value));
        Array& m = mit->second;
        Array& v = vit->second;
        for (std::size_t i = 0; i < e.value.size(); ++i) {
            const double g = e.grad[i];
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            e.value[i] -= cfg_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
        }
    }
}

void Adam::export_state(ParamStore& out) const {
    out.set("optim.step", Array::scalar(static_cast<double>(t_)), false);
    for (const auto& [name, m] : m_) {
        out.set("optim.m." + name, m, false);
    }
    for (const auto& [name, v] : v_) {
        out.set("optim.v." + name, v, false);
    }
}

void Adam::import_state(const ParamStore& in) {
    m_.clear();
    v_.clear();
    t_ = in.contains("optim.step") ? static_cast<std::int64_t>(in.value("optim.step").item()) : 0;
    for (const auto& [name, e] : in.entries()) {
        if (name.rfind("optim.m.", 0) == 0) {
            m_[name.substr(8)] = e.value;
        } else if (name.rfind("optim.v.", 0) == 0) {
            v_[name.substr(8)] = e.value;
        }
    }
}

} // namespace repcond::diffmath
