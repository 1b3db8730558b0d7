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

#include <cstdint>
#include <map>
#include <string>

#include "repcond/diffmath/param_store.hpp"

namespace repcond::diffmath {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Only trainable entries move; frozen entries
/// keep their exact bit pattern.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(ParamStore& params);

    std::int64_t steps() const noexcept { return t_; }
    const AdamConfig& config() const noexcept { return cfg_; }
    void set_lr(double lr) noexcept { cfg_.lr = lr; }

    /// Moments are stored as "optim.m.<name>", "optim.v.<name>" and the step
    /// counter as "optim.step" so training can resume bit-exactly.
    void export_state(ParamStore& out) const;
    void import_state(const ParamStore& in);

private:
    AdamConfig cfg_;
    std::int64_t t_ = 0;
    std::map<std::string, Array> m_;
    std::map<std::string, Array> v_;
};

} // namespace repcond::diffmath
