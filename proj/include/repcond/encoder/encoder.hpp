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
#include "repcond/molkit/dataset.hpp"

namespace repcond::encoder {

using diffmath::Array;
using diffmath::ParamStore;
using diffmath::Tape;
using diffmath::Var;
using molkit::Molecule;

struct EncoderConfig {
    int layers = 6;
    int dim = 32;
    int vocab = 6;
    int message_hidden = 32;
    double cutoff = 2.5;
    double sigma_pre = 0.1;
};

/// Throws ParameterError unless layers >= 2 and dim >= 4.
void validate(const EncoderConfig& cfg);

/// Per-layer node features (N x d) and pooled graph features (length d):
/// masked mean over valid atoms followed by L2 normalization.
struct LayerStack {
    std::vector<Array> node_feats;
    std::vector<Array> graph_feats;
};

/// The same quantities as tape variables, for use inside a loss.
struct EncodedGraph {
    std::vector<Var> node_feats;
    std::vector<Var> graph_feats;
};

/// Directed edge list of one message-passing graph. Bonded pairs always
/// interact with weight 1; other valid pairs closer than the cutoff interact
/// with weight (1 - d^2 / cutoff^2)^2, which vanishes smoothly at the cutoff.
struct EdgeSet {
    std::vector<std::size_t> src;
    std::vector<std::size_t> dst;
    std::vector<bool> bonded;
};

EdgeSet build_edges(const Array& coords, const Molecule& topology, double cutoff);

/// Fresh encoder weights ("enc." prefix), including the denoising head.
ParamStore init_encoder(const EncoderConfig& cfg, std::uint64_t seed);

/// Differentiable encoder. `coords` is N x 3, `atom_inputs` is N x vocab
/// (one-hot or straight-through relaxed); `topology` supplies bonds and mask.
/// Coordinates enter only through squared pairwise distances, so every
/// feature is invariant under rigid motions.
EncodedGraph encode(Tape& t, ParamStore& params, const EncoderConfig& cfg, Var coords, Var atom_inputs,
                    const Molecule& topology);

/// Evaluation without gradients.
LayerStack encode(const Molecule& m, ParamStore& params, const EncoderConfig& cfg);

/// Equivariant displacement head: sum_j (x_i - x_j) * gate(h_i, h_j, d_ij^2).
Var predict_displacement(Tape& t, ParamStore& params, const EncoderConfig& cfg, Var coords,
                         Var last_node_feats, const Molecule& topology);

struct PretrainOptions {
    int epochs = 20;
    std::size_t batch_size = 8;
    double lr = 1e-3;
    std::uint64_t seed = 0;
};

struct PretrainResult {
    ParamStore params;                 ///< all entries frozen
    std::vector<double> epoch_losses;  ///< mean denoising loss per epoch
    double initial_loss = 0.0;  ///< initial weights, fixed evaluation noise, training split
    double final_loss = 0.0;    ///< trained weights, same evaluation noise
};

/// Coordinate-denoising pretraining: perturb valid coordinates with
/// N(0, sigma_pre^2) and regress the displacement noisy - clean.
/// Throws NumericError (with the loss trace) if the loss diverges.
PretrainResult pretrain_denoising(const molkit::Dataset& data, const EncoderConfig& cfg,
                                  const PretrainOptions& opts);

} // namespace repcond::encoder
