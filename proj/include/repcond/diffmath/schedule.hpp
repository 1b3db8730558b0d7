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

#include <cstddef>
#include <vector>

namespace repcond::diffmath {

/// Discrete cosine noise schedule. Step k in [0, T) sits at diffusion time
/// (k + 1) / T; betas are clipped at 0.999 and alpha_bar is their cumulative
/// product, so alpha_bar is strictly decreasing from just below 1 to near 0.
class CosineSchedule {
public:
    explicit CosineSchedule(int steps, double offset = 0.008);

    int steps() const noexcept { return static_cast<int>(alpha_bar_.size()); }
    double alpha_bar(int k) const;
    double beta(int k) const;
    double time(int k) const { return (k + 1.0) / steps(); }

    /// `count` step indices from T - 1 down to 0, evenly strided and distinct.
    std::vector<int> strided(int count) const;

private:
    std::vector<double> alpha_bar_;
    std::vector<double> beta_;
};

} // namespace repcond::diffmath
