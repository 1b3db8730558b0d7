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

#include <chrono>
#include <filesystem>
#include <string>

#include "repcond/diffmath/param_store.hpp"
#include "repcond/encoder/encoder.hpp"
#include "repcond/molkit/dataset.hpp"
#include "repcond/pipeline/config.hpp"
#include "repcond/pipeline/manifest.hpp"

namespace repcond::pipeline::detail {

void log(const std::string& msg);

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

/// Loads the dataset; when synth-data recorded its hash the file must match.
molkit::Dataset load_data(const RunConfig& cfg, const Manifest& manifest);

/// Loads encoder.ckpt after checking its recorded hash; every entry frozen.
diffmath::ParamStore load_encoder(const RunConfig& cfg, const Manifest& manifest);

/// Loads a checkpoint after checking the hash recorded by `phase`.
diffmath::ParamStore load_checked(const RunConfig& cfg, const Manifest& manifest, const std::string& phase,
                                  const char* file);

/// Saves, hashes and records the config snapshot in the manifest.
std::string save_checkpoint(const diffmath::ParamStore& ps, const std::filesystem::path& path);
void record_config(Manifest& manifest, const RunConfig& cfg);

std::string fmt(double v);

} // namespace repcond::pipeline::detail
