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
#include <map>
#include <string>
#include <vector>

#include "repcond/diffmath/array.hpp"

namespace repcond::molkit {

using diffmath::Array;

struct Bond {
    std::size_t i = 0;
    std::size_t j = 0;
    int order = 1;

    friend bool operator==(const Bond&, const Bond&) = default;
};

/// A toy molecule: coordinates (N x 3), integer atom types, bonds, a
/// validity mask (false marks padding) and the motif labels planted at
/// synthesis time.
struct Molecule {
    Array coords;
    std::vector<int> atoms;
    std::vector<Bond> bonds;
    std::vector<bool> mask;
    std::map<std::string, bool> motifs;

    std::size_t size() const noexcept { return atoms.size(); }
    std::size_t valid_count() const noexcept;

    friend bool operator==(const Molecule&, const Molecule&) = default;
};

/// Throws ValidationError when an invariant fails. A non-negative `vocab`
/// also bounds the atom types.
void validate(const Molecule& m, int vocab = -1);

/// Per-axis mean of the valid atom coordinates.
std::array<double, 3> center_of_mass(const Molecule& m);
std::array<double, 3> center_of_mass(const Array& coords, const std::vector<bool>& mask);

/// Subtracts the valid-atom mean from every valid atom; padding untouched.
void remove_center_of_mass(Array& coords, const std::vector<bool>& mask);

/// One-hot atom types (N x vocab); padding rows are zero.
Array one_hot(const Molecule& m, int vocab);

/// Adds i.i.d. N(0, sigma^2) noise to every valid coordinate.
Molecule perturb_coords(const Molecule& m, double sigma, std::uint64_t seed);

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 random_rotation(std::uint64_t seed);
Array rotate(const Array& coords, const Mat3& r);
/// x -> R x + t applied to every atom.
Molecule rigid_transform(const Molecule& m, const Mat3& r, const std::array<double, 3>& t);
/// Relabels atom i as perm[i]; bonds and mask follow.
Molecule permute(const Molecule& m, const std::vector<std::size_t>& perm);

} // namespace repcond::molkit
