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

#include "repcond/molkit/molecule.hpp"

#include <cmath>

#include "repcond/errors.hpp"
#include "repcond/rng.hpp"

namespace repcond::molkit {

std::size_t Molecule::valid_count() const noexcept {
    std::size_t n = 0;
    for (bool m : mask) n += m ? 1 : 0;
    return n;
}

void validate(const Molecule& m, int vocab) {
    const std::size_t n = m.atoms.size();
    if (n == 0) {
        throw ValidationError("molecule has no atoms");
    }
    if (m.coords.ndim() != 2 || m.coords.rows() != n || m.coords.cols() != 3) {
        throw ValidationError("coords shape " + diffmath::shape_string(m.coords.shape()) +
                              " does not match " + std::to_string(n) + " atoms");
    }
    if (m.mask.size() != n) {
        throw ValidationError("mask length does not match atom count");
    }
    if (m.valid_count() == 0) {
        throw ValidationError("mask has no valid atom");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (m.atoms[i] < 0 || (vocab >= 0 && m.atoms[i] >= vocab)) {
            throw ValidationError("atom " + std::to_string(i) + " has type " +
                                  std::to_string(m.atoms[i]) + " outside the vocabulary");
        }
        if (m.mask[i]) {
            for (std::size_t c = 0; c < 3; ++c) {
                if (!std::isfinite(m.coords.at(i, c))) {
                    throw ValidationError("atom " + std::to_string(i) + " has a non-finite coordinate");
                }
            }
        }
    }
    for (const auto& b : m.bonds) {
        if (!(b.i < b.j) || b.j >= n) {
            throw ValidationError("bond (" + std::to_string(b.i) + ", " + std::to_string(b.j) +
                                  ") out of range for " + std::to_string(n) + " atoms");
        }
        if (!m.mask[b.i] || !m.mask[b.j]) {
            throw ValidationError("bond (" + std::to_string(b.i) + ", " + std::to_string(b.j) +
                                  ") touches a padding atom");
        }
        if (b.order != 1 && b.order != 2) {
            throw ValidationError("bond order must be 1 or 2");
        }
    }
}

std::array<double, 3> center_of_mass(const Array& coords, const std::vector<bool>& mask) {
    std::array<double, 3> c{0, 0, 0};
    std::size_t n = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        for (std::size_t k = 0; k < 3; ++k) c[k] += coords.at(i, k);
        ++n;
    }
    for (auto& v : c) v /= static_cast<double>(n == 0 ? 1 : n);
    return c;
}

std::array<double, 3> center_of_mass(const Molecule& m) { return center_of_mass(m.coords, m.mask); }

void remove_center_of_mass(Array& coords, const std::vector<bool>& mask) {
    const auto c = center_of_mass(coords, mask);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        for (std::size_t k = 0; k < 3; ++k) coords.at(i, k) -= c[k];
    }
}

Array one_hot(const Molecule& m, int vocab) {
    Array out(diffmath::Shape{m.size(), static_cast<std::size_t>(vocab)});
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m.mask[i]) {
            if (m.atoms[i] < 0 || m.atoms[i] >= vocab) {
                throw ContractError("atom type " + std::to_string(m.atoms[i]) +
                                    " outside vocabulary of size " + std::to_string(vocab));
            }
            out.at(i, static_cast<std::size_t>(m.atoms[i])) = 1.0;
        }
    }
    return out;
}

Molecule perturb_coords(const Molecule& m, double sigma, std::uint64_t seed) {
    if (!std::isfinite(sigma)) {
        throw ParameterError("perturb_coords: sigma must be finite");
    }
    Molecule out = m;
    Rng rng(seed);
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (!m.mask[i]) continue;
        for (std::size_t k = 0; k < 3; ++k) out.coords.at(i, k) += sigma * rng.normal();
    }
    return out;
}

Mat3 random_rotation(std::uint64_t seed) {
    Rng rng(seed);
    double q[4];
    double n = 0;
    do {
        n = 0;
        for (double& v : q) {
            v = rng.normal();
            n += v * v;
        }
    } while (n < 1e-12);
    n = std::sqrt(n);
    const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
    return Mat3{{{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
                 {2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
                 {2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}}};
}

Array rotate(const Array& coords, const Mat3& r) {
    Array out(coords.shape());
    for (std::size_t i = 0; i < coords.rows(); ++i) {
        for (std::size_t a = 0; a < 3; ++a) {
            double s = 0;
            for (std::size_t b = 0; b < 3; ++b) s += r[a][b] * coords.at(i, b);
            out.at(i, a) = s;
        }
    }
    return out;
}

Molecule rigid_transform(const Molecule& m, const Mat3& r, const std::array<double, 3>& t) {
    Molecule out = m;
    out.coords = rotate(m.coords, r);
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (std::size_t k = 0; k < 3; ++k) out.coords.at(i, k) += t[k];
    }
    return out;
}

Molecule permute(const Molecule& m, const std::vector<std::size_t>& perm) {
    const std::size_t n = m.size();
    if (perm.size() != n) {
        throw DimensionError("permutation length does not match atom count");
    }
    Molecule out = m;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t p = perm[i];
        out.atoms[p] = m.atoms[i];
        out.mask[p] = m.mask[i];
        for (std::size_t k = 0; k < 3; ++k) out.coords.at(p, k) = m.coords.at(i, k);
    }
    for (auto& b : out.bonds) {
        std::size_t i = perm[b.i], j = perm[b.j];
        if (i > j) std::swap(i, j);
        b.i = i;
        b.j = j;
    }
    return out;
}

} // namespace repcond::molkit
