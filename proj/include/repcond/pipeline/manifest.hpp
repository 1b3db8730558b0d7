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

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

namespace repcond::pipeline {

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_bytes(const std::string& bytes);

/// manifest.json under the output directory. Each phase writes its own
/// entry under "phases"; the config snapshot and seed sit at the top.
class Manifest {
public:
    explicit Manifest(std::filesystem::path dir);

    /// Reads the manifest if present, otherwise starts empty.
    static Manifest open(const std::filesystem::path& dir);
    void save() const;

    nlohmann::json& json() { return j_; }
    const nlohmann::json& json() const { return j_; }
    nlohmann::json& phase(const std::string& name) { return j_["phases"][name]; }
    bool has_phase(const std::string& name) const;

    /// Hash recorded for `phase`'s artifact; throws CheckpointError when the
    /// phase never ran.
    std::string recorded_hash(const std::string& phase) const;
    /// Throws CheckpointError unless the file on disk hashes to the value
    /// recorded by `phase`.
    void verify(const std::string& phase, const std::filesystem::path& file) const;

    std::filesystem::path path() const { return dir_ / "manifest.json"; }

private:
    std::filesystem::path dir_;
    nlohmann::json j_ = nlohmann::json::object();
};

} // namespace repcond::pipeline
