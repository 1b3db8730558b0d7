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
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "repcond/diagnostics/diagnostics.hpp"
#include "repcond/encoder/encoder.hpp"
#include "repcond/generator/generator.hpp"
#include "repcond/objectives/objectives.hpp"
#include "repcond/rdm/rdm.hpp"
#include "repcond/rephead/rephead.hpp"

namespace repcond::pipeline {

struct DataConfig {
    std::string path;  ///< empty: <out>/dataset.jsonl
    std::size_t count = 2000;
    int max_atoms = 16;
};

struct TrainConfig {
    int epochs = 30;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    int checkpoint_every = 500;  ///< steps; 0 disables periodic checkpoints
    int max_steps = 0;           ///< stop early after this many total steps (0: run all epochs)
    bool bypass_head = false;    ///< condition on mu instead of a posterior draw
    std::size_t eval_molecules = 256;
};

struct SampleConfig {
    std::size_t n = 500;
    std::vector<int> steps{100};
    int atoms = 0;  ///< fixed atom count; 0 draws from the training histogram
    std::int64_t seed = -1;  ///< sampling seed; negative uses the run seed
};

struct DiagConfig {
    std::size_t molecules = 0;  ///< test-split molecules used (0: all)
    double epsilon = 1e-3;
    int lipschitz_probes = 100;
    int knn_k = 10;
    diagnostics::ProbeConfig probe;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::string out = "run";
    DataConfig data;
    encoder::EncoderConfig encoder;
    encoder::PretrainOptions pretrain;  ///< seed field ignored; derived from the run seed
    rephead::HeadConfig head;
    generator::GenConfig generator;
    objectives::LossWeights loss;
    objectives::RepaConfig repa;
    TrainConfig train;
    rdm::RdmConfig rdm;
    rdm::TrainOptions rdm_train;  ///< seed field ignored
    SampleConfig sample;
    DiagConfig diag;

    std::filesystem::path out_dir() const { return out; }
    std::filesystem::path dataset_path() const;
};

/// Throws ConfigError on any invalid sub-config or inconsistent widths.
void validate(const RunConfig& cfg);

nlohmann::json to_json(const RunConfig& cfg);
/// Unknown keys raise ConfigError naming them; missing keys keep defaults.
RunConfig from_json(const nlohmann::json& j);

/// Loads a JSON config file. A run manifest is accepted too; its embedded
/// "config" is used.
RunConfig load_config(const std::filesystem::path& path);

/// Applies "a.b=value" (dotted key into the JSON form). The value is parsed
/// as JSON when possible, otherwise taken as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

} // namespace repcond::pipeline
