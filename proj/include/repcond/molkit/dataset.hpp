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

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "repcond/molkit/molecule.hpp"

namespace repcond::molkit {

/// Motif labels planted by the synthesizer. Two local atom-pair motifs, a
/// triangle motif and a global ring label.
inline const std::array<std::string, 4> kMotifNames = {"hydroxyl", "amine", "triangle", "ring"};

/// Atom types 0..3 define the motifs; types >= 4 are backbone decoys.
inline constexpr int kMotifTypeCount = 4;

struct Dataset {
    std::vector<Molecule> molecules;
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
    std::uint64_t seed = 0;

    std::vector<Molecule> subset(const std::vector<std::size_t>& index) const;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct SynthConfig {
    std::size_t count = 2000;
    int max_atoms = 16;
    int vocab = 6;
    std::uint64_t seed = 0;
};

/// Deterministic toy dataset: chain or ring backbones with planted motifs,
/// unit bond lengths, zero center of mass, and an 80/10/10 split.
Dataset synthesize_dataset(const SynthConfig& cfg);

/// Throws ValidationError if splits overlap or miss an index.
void validate_splits(const Dataset& d);

std::string to_json_line(const Molecule& m);
Molecule from_json_line(const std::string& line);

/// JSON-lines: one molecule per line. Each line carries a "split" key; the
/// first line also carries the dataset "seed".
void save_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

} // namespace repcond::molkit
