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
#include <string>
#include <vector>

#include "repcond/diffmath/param_store.hpp"
#include "repcond/diffmath/tape.hpp"
#include "repcond/encoder/encoder.hpp"

namespace repcond::objectives {

using diffmath::Array;
using diffmath::ParamStore;
using diffmath::Tape;
using diffmath::Var;
using molkit::Molecule;

struct LossWeights {
    double lambda_kl = 5e-7;
    double lambda_perc = 1e-3;
    double lambda_repa = 1e-3;
    double w_min = 0.1;
    double w_max = 1.0;
};

/// Throws ParameterError for negative weights or w_min > w_max.
void validate(const LossWeights& w);

/// Tap layers are 1-based; 0 selects the default (last encoder layer,
/// generator block ceil(depth / 2)).
struct RepaConfig {
    int encoder_layer = 0;
    int generator_layer = 0;
};

int resolve_encoder_layer(const RepaConfig& cfg, int encoder_layers);
int resolve_generator_layer(const RepaConfig& cfg, int generator_depth);

/// w(t) = w_min + (w_max - w_min) (1 + cos(pi t)) / 2; t = 0 is clean data.
double cosine_weight(double t, double w_min, double w_max);

/// Row-wise one-hot of the argmax (lowest index on ties) whose adjoint is
/// the identity: the value of onehot(argmax) + logits - sg(logits) without
/// the rounding that literal sum would introduce.
Var straight_through_onehot(Var logits);
Array argmax_onehot(const Array& logits);

/// w(t) * || sg(g(clean)) - g(denoised) ||^2 with g the shared learnable
/// layer pooling over frozen-encoder graph features. The denoised molecule
/// reuses the clean molecule's bonds and mask. `clean_feats` may carry the
/// clean per-layer graph features when the caller already has them.
Var perceptual_loss(Tape& t, ParamStore& enc_params, const encoder::EncoderConfig& enc_cfg, Var w_logits,
                    const Molecule& clean, Var denoised_coords, Var denoised_logits, double time,
                    const LossWeights& weights, const std::vector<Array>* clean_feats = nullptr);

/// Projection MLP ("repa." prefix): d_g -> d_e -> d_e with tanh in between.
ParamStore init_projection(int gen_dim, int enc_dim, std::uint64_t seed);

/// -(1/|A|) sum_{i valid} cos(Proj(gen_i), enc_i), encoder side constant.
/// ContractError when no atom is valid.
Var repa_loss(Tape& t, ParamStore& proj_params, Var gen_feats, const Array& enc_feats,
              const std::vector<bool>& mask);

struct LossTerms {
    Var gen;
    Var kl;
    Var perc;
    Var repa;
};

/// l_gen + lambda_kl l_kl + lambda_perc l_perc + lambda_repa l_repa. Terms
/// with a zero weight are left out, so all-zero weights give l_gen itself.
/// A non-finite component raises NumericError naming it.
Var total_loss(const LossTerms& terms, const LossWeights& weights);

} // namespace repcond::objectives
