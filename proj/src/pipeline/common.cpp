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

#include "internal.hpp"

#include <cstdio>
#include <iostream>

#include "repcond/errors.hpp"
#include "repcond/pipeline/phases.hpp"

namespace repcond::pipeline {

namespace {
LogFn& sink() {
    static LogFn fn = [](const std::string& s) { std::cerr << s << '\n'; };
    return fn;
}
} // namespace

void set_log(LogFn fn) { sink() = std::move(fn); }

namespace detail {

void log(const std::string& msg) {
    if (sink()) sink()(msg);
}

molkit::Dataset load_data(const RunConfig& cfg, const Manifest& manifest) {
    const auto path = cfg.dataset_path();
    if (!std::filesystem::exists(path)) {
        throw Error("dataset " + path.string() + " not found; run synth-data first or set data.path");
    }
    if (manifest.has_phase("synth-data") && cfg.data.path.empty()) manifest.verify("synth-data", path);
    return molkit::load_dataset(path);
}

diffmath::ParamStore load_checked(const RunConfig& cfg, const Manifest& manifest, const std::string& phase,
                                  const char* file) {
    const auto path = cfg.out_dir() / file;
    if (!std::filesystem::exists(path)) {
        throw CheckpointError("missing checkpoint " + path.string() + "; run '" + phase + "' first");
    }
    // Parse first so a damaged header is reported as such, then check the hash.
    diffmath::ParamStore ps = diffmath::ParamStore::load(path);
    manifest.verify(phase, path);
    return ps;
}

diffmath::ParamStore load_encoder(const RunConfig& cfg, const Manifest& manifest) {
    diffmath::ParamStore ps = load_checked(cfg, manifest, "pretrain-encoder", "encoder.ckpt");
    for (const auto& name : ps.names()) ps.set_trainable(name, false);
    return ps;
}

std::string save_checkpoint(const diffmath::ParamStore& ps, const std::filesystem::path& path) {
    std::filesystem::create_directories(path.parent_path());
    ps.save(path);
    return sha256_file(path);
}

void record_config(Manifest& manifest, const RunConfig& cfg) {
    manifest.json()["config"] = to_json(cfg);
    manifest.json()["seed"] = cfg.seed;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail
} // namespace repcond::pipeline
