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
#include <functional>
#include <optional>
#include <vector>

#include "repcond/diffmath/param_store.hpp"
#include "repcond/diffmath/schedule.hpp"
#include "repcond/diffmath/tape.hpp"
#include "repcond/molkit/molecule.hpp"

namespace repcond::generator {

using diffmath::Array;
using diffmath::ParamStore;
using diffmath::Tape;
using diffmath::Var;
using molkit::Molecule;

struct GenConfig {
    int depth = 4;
    int dim = 48;
    int steps = 100;
    int vocab = 6;
    int latent_dim = 16;
};

/// Throws ParameterError unless depth >= 2, steps >= 10 and widths are positive.
void validate(const GenConfig& cfg);

struct NoisyState {
    Array coords;       ///< N x 3, zero centre of mass over valid atoms
    Array atom_logits;  ///< N x vocab, Gaussian-corrupted one-hots
    int t_index = 0;
    std::vector<bool> mask;
};

/// coords_t = sqrt(ab) x0 + sqrt(1 - ab) eps projected to zero CoM; atom
/// one-hots are noised the same way without the projection.
NoisyState corrupt(const Molecule& m, const GenConfig& cfg, int t_index, std::uint64_t seed);

/// Fresh weights ("gen." prefix).
ParamStore init_generator(const GenConfig& cfg, std::uint64_t seed);

struct Prediction {
    Var coords;  ///< N x 3 clean-coordinate estimate, zero CoM over valid atoms
    Var logits;  ///< N x vocab
    Var tap;     ///< N x dim hidden state after block `tap_layer`
};

/// EGNN-style x0 prediction conditioned on the latent `z` (length latent_dim).
/// Messages see only distances, coordinate updates are sums of relative
/// positions scaled by invariant gates, so coordinates are rotation
/// equivariant and logits invariant. `tap_layer` is 1-based.
Prediction denoise(Tape& t, ParamStore& params, const GenConfig& cfg, Var coords_t, Var logits_t, int t_index,
                   Var z, const std::vector<bool>& mask, int tap_layer);

/// mean_i ||x_i - x0_i||^2 + mean_i ||l_i - onehot_i||^2 over valid atoms.
/// No centre-of-mass projection is applied here.
Var gen_loss(Var coords, Var logits, const Molecule& clean, int vocab);

/// Orthogonal projection onto the zero-CoM subspace of the valid atoms;
/// masked rows pass through.
Var remove_com(Var coords, const std::vector<bool>& mask);

struct SampleOptions {
    int steps = 0;  ///< reverse steps; 0 means the full schedule
    /// Applied to every coordinate noise draw (rows are rotated by R).
    std::optional<molkit::Mat3> noise_rotation;
    /// Called after every reverse step with the current coordinates.
    std::function<void(int step, const Array& coords)> on_step;
};

/// Ancestral reverse diffusion with x0 posteriors on a strided schedule.
/// Atom types are the argmax of the final logits; bonds are left empty.
Molecule sample(const Array& z, std::size_t atom_count, ParamStore& params, const GenConfig& cfg,
                std::uint64_t seed, const SampleOptions& opts = {});

} // namespace repcond::generator
