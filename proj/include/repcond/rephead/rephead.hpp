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
#include <vector>

#include "repcond/diffmath/param_store.hpp"
#include "repcond/diffmath/tape.hpp"
#include "repcond/encoder/encoder.hpp"

namespace repcond::rephead {

using diffmath::Array;
using diffmath::ParamStore;
using diffmath::Tape;
using diffmath::Var;

struct HeadConfig {
    int latent_dim = 16;
    double v_min = -10.0;
    double v_max = 5.0;
};

/// Throws ParameterError unless v_min < v_max and latent_dim >= 2.
void validate(const HeadConfig& cfg);

/// Diagonal Gaussian posterior over the conditioning latent.
struct LatentPosterior {
    Array mu;
    Array log_var;
};

struct PosteriorVars {
    Var mu;
    Var log_var;
};

/// Head parameters ("head." prefix): pooling logits "head.w_logits" (zeros,
/// length `layers`) and the two posterior MLPs "head.mu.*", "head.lv.*".
ParamStore init_head(const HeadConfig& cfg, int layers, int feat_dim, std::uint64_t seed);

/// sum_l softmax(w_logits)_l * graph_feats[l]. ContractError on a length mismatch.
Var pool_layers(const std::vector<Var>& graph_feats, Var w_logits);
Array pool_layers(const std::vector<Array>& graph_feats, const Array& w_logits);

/// mu = f_mu(g), log_var = clamp(f_lv(g), v_min, v_max); tanh MLPs of width 2 d_z.
PosteriorVars posterior(Tape& t, ParamStore& params, const HeadConfig& cfg, Var g);
LatentPosterior posterior(const Array& g, ParamStore& params, const HeadConfig& cfg);

/// Pooled feature and posterior of an encoded molecule, without gradients.
LatentPosterior encode_posterior(const encoder::LayerStack& stack, ParamStore& params, const HeadConfig& cfg);

/// z = mu + exp(log_var / 2) * eps with eps ~ N(0, I) drawn from `seed`.
Var reparameterize(const PosteriorVars& p, std::uint64_t seed);
Array reparameterize(const LatentPosterior& p, std::uint64_t seed);

/// KL(q || N(0, I)) = -1/2 sum(1 + log_var - mu^2 - exp(log_var)), evaluated
/// as 1/2 sum(mu^2 + expm1(log_var) - log_var) so it stays accurate near 0.
Var kl_loss(const PosteriorVars& p);
double kl_loss(const LatentPosterior& p);

} // namespace repcond::rephead
