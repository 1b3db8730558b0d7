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
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "repcond/diagnostics/diagnostics.hpp"
#include "repcond/pipeline/config.hpp"

namespace repcond::pipeline {

using diffmath::Array;

/// File names under the output directory.
namespace files {
inline constexpr const char* kEncoder = "encoder.ckpt";
inline constexpr const char* kPhase1 = "phase1.ckpt";
inline constexpr const char* kPhase1Loss = "phase1_loss.csv";
inline constexpr const char* kBaseline = "baseline.ckpt";
inline constexpr const char* kBaselineLoss = "baseline_loss.csv";
inline constexpr const char* kRdm = "rdm.ckpt";
inline constexpr const char* kRdmLoss = "rdm_loss.csv";
inline constexpr const char* kLatents = "latents_mu.repm";
inline constexpr const char* kSampleSummary = "sample_summary.csv";
inline constexpr const char* kGeometry = "geometry.csv";
inline constexpr const char* kProbe = "probe.csv";
inline constexpr const char* kCrossLayer = "cross_layer.csv";
inline constexpr const char* kPooling = "pooling_weights.csv";
inline constexpr const char* kReport = "report.md";
} // namespace files

/// Logging sink for progress lines; defaults to stderr.
using LogFn = std::function<void(const std::string&)>;
void set_log(LogFn fn);

struct DataOutcome {
    std::filesystem::path path;
    std::size_t molecules = 0;
};
DataOutcome synth_data(const RunConfig& cfg);

struct PretrainOutcome {
    double initial_loss = 0;
    double final_loss = 0;
    std::vector<double> epoch_losses;
};
PretrainOutcome pretrain_encoder(const RunConfig& cfg);

struct StepLosses {
    std::int64_t step = 0;
    double gen = 0;
    std::optional<double> kl, perc, repa;  ///< empty when the term was not computed
    double total = 0;
};

struct TrainOutcome {
    std::vector<StepLosses> trace;  ///< steps run by this call only
    double initial_l_gen = 0;       ///< fixed evaluation set, weights at the start of the call
    double final_l_gen = 0;
    std::int64_t steps_done = 0;    ///< total optimizer steps in the checkpoint
};

/// Phase I. Trains generator, head (pooling logits included) and the REPA
/// projection with the encoder frozen. `resume` restarts from a checkpoint
/// written by an earlier call with the same config.
TrainOutcome phase1_train(const RunConfig& cfg, const std::optional<std::filesystem::path>& resume = {});

/// Plain conditional generator: l_gen only, conditioned on the head's mu.
/// Shares every random stream with phase1_train.
TrainOutcome baseline_train(const RunConfig& cfg);

struct RdmOutcome {
    std::string phase1_sha256;
    bool collapse_warning = false;
    double min_latent_std = 0;
    double initial_loss = 0;
    double final_loss = 0;
};
/// Phase II. Refuses to run (CheckpointError) when phase1.ckpt does not
/// hash to the value the manifest recorded.
RdmOutcome phase2_train(const RunConfig& cfg);

struct SampleRow {
    int steps = 0;
    std::size_t n = 0;
    double mean_atoms = 0;
    double mean_nn_distance = 0;  ///< mean nearest-neighbour distance per atom
    double atom_type_tv = 0;      ///< total variation vs the training atom-type histogram
    double seconds = 0;
    std::filesystem::path file;
};
/// Phase III. One JSON-lines file and one summary row per step setting.
std::vector<SampleRow> phase3_sample(const RunConfig& cfg);

struct DiagnoseOutcome {
    diagnostics::GeometryReport raw;
    diagnostics::GeometryReport head;
    diagnostics::ProbeResult probe;
    std::vector<double> pooling_weights;
    Array cross_layer;
    std::size_t molecules = 0;
};
/// Geometry of the raw last-layer pooled encoder features and of the head
/// mu-space on the same test molecules, per-layer probes, pooling weights.
DiagnoseOutcome diagnose(const RunConfig& cfg);

/// Geometry of an external representation matrix (REPM1, or CSV when the
/// extension is .csv). Lipschitz columns are NaN: there is no encoder to
/// perturb. Writes geometry_external.csv under the output directory.
diagnostics::GeometryReport external_geometry(const RunConfig& cfg, const std::filesystem::path& matrix);

/// Per-layer motif probes on the frozen encoder alone (needs encoder.ckpt).
diagnostics::ProbeResult probe(const RunConfig& cfg);

/// Markdown summary of whatever the manifest records.
std::filesystem::path report(const RunConfig& cfg);

} // namespace repcond::pipeline
