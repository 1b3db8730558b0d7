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
#include <optional>
#include <vector>

#include "repcond/diffmath/param_store.hpp"

namespace repcond::rdm {

using diffmath::Array;
using diffmath::ParamStore;

struct RdmConfig {
    int steps = 100;
    std::vector<int> hidden{128, 128};
    int embed_dim = 32;        ///< time and atom-count embedding width
    int max_atom_count = 64;   ///< rows 1..max of the count embedding; row 0 means "no count"
    double count_dropout = 0.1;
    double clip = 6.0;         ///< bound on the standardized x0 estimate while sampling
};

/// Throws ParameterError unless steps >= 10 and the widths are positive.
void validate(const RdmConfig& cfg);

struct TrainOptions {
    int epochs = 50;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    std::uint64_t seed = 0;
};

struct TrainResult {
    ParamStore params;  ///< "rdm." weights plus frozen "rdm.latent_mean" / "rdm.latent_std"
    std::vector<double> epoch_losses;
    double initial_loss = 0.0;  ///< initial weights on a fixed evaluation draw
    double final_loss = 0.0;    ///< trained weights on the same draw
};

/// Epsilon-prediction DDPM over standardized latents (M x d_z, M >= 100).
/// `atom_counts` (length M) condition additively and are dropped with
/// probability count_dropout so unconditioned sampling stays available.
TrainResult train_rdm(const Array& latents, const std::vector<int>& atom_counts, const RdmConfig& cfg,
                      const TrainOptions& opts);

/// Ancestral sampling of one latent; deterministic given `seed`.
Array sample_rdm(ParamStore& params, const RdmConfig& cfg, std::optional<int> atom_count, std::uint64_t seed);

/// Row i equals sample_rdm(params, cfg, counts[i], derive_seed(seed, "rdm-sample", i));
/// a count of 0 means unconditioned. Evaluated as one batch per step, so rows
/// agree with single draws up to floating-point summation order.
Array sample_rdm_batch(ParamStore& params, const RdmConfig& cfg, const std::vector<int>& counts, std::uint64_t seed);

} // namespace repcond::rdm
