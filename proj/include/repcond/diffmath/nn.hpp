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

#include <string>
#include <vector>

#include "repcond/diffmath/ops.hpp"
#include "repcond/diffmath/param_store.hpp"
#include "repcond/rng.hpp"

// Small layer helpers shared by the networks.
namespace repcond::diffmath {

/// Normal(0, scale^2 / fan_in) weights, fan_in = rows.
Array init_weight(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0);

/// Registers "<prefix>.w" (in x out) and "<prefix>.b" (out, zero).
void add_linear(ParamStore& ps, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
                double scale = 1.0);

/// x W + b for x of shape (n) or (m x n).
Var affine(Var x, Var w, Var b);
Var linear(Tape& t, ParamStore& ps, const std::string& prefix, Var x);

/// Two-layer MLP over edge inputs [h_src, h_dst, d2]. The first layer is
/// split per input block ("wi", "wj", "wd", "b1") so node-level products are
/// computed once and gathered onto edges; the output layer is "w2", "b2".
void add_pair_mlp(ParamStore& ps, const std::string& prefix, std::size_t dim, std::size_t hidden,
                  std::size_t out, Rng& rng, double out_scale = 1.0);
Var pair_mlp(Tape& t, ParamStore& ps, const std::string& prefix, Var h, const std::vector<std::size_t>& src,
             const std::vector<std::size_t>& dst, Var d2);

} // namespace repcond::diffmath
