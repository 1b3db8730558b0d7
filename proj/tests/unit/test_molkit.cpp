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

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "repcond/errors.hpp"
#include "repcond/molkit/dataset.hpp"
#include "repcond/molkit/molecule.hpp"

namespace mk = repcond::molkit;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("repcond_molkit_" + name);
}

void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream(p) << s;
}

} // namespace

TEST_CASE("synthesis is deterministic") {
    mk::SynthConfig cfg{1, 16, 6, 7};
    CHECK(mk::synthesize_dataset(cfg) == mk::synthesize_dataset(cfg));
    cfg.seed = 8;
    CHECK_FALSE(mk::synthesize_dataset(cfg).molecules[0] == mk::synthesize_dataset({1, 16, 6, 7}).molecules[0]);
}

TEST_CASE("synthesized molecules satisfy invariants and motif balance") {
    const auto d = mk::synthesize_dataset({2000, 16, 6, 3});
    mk::validate_splits(d);
    std::map<std::string, int> counts;
    for (const auto& m : d.molecules) {
        mk::validate(m, 6);
        CHECK(m.size() <= 16);
        const auto c = mk::center_of_mass(m);
        for (double v : c) CHECK(std::abs(v) < 1e-9);
        for (const auto& b : m.bonds) {
            const double dx = m.coords.at(b.i, 0) - m.coords.at(b.j, 0);
            const double dy = m.coords.at(b.i, 1) - m.coords.at(b.j, 1);
            const double dz = m.coords.at(b.i, 2) - m.coords.at(b.j, 2);
            CHECK(std::sqrt(dx * dx + dy * dy + dz * dz) == doctest::Approx(1.0).epsilon(1e-9));
        }
        REQUIRE(m.motifs.size() == mk::kMotifNames.size());
        for (const auto& [name, on] : m.motifs) counts[name] += on ? 1 : 0;
    }
    for (const auto& name : mk::kMotifNames) {
        const double freq = counts[name] / 2000.0;
        CAPTURE(name);
        CHECK(freq >= 0.1);
        CHECK(freq <= 0.9);
    }
}

TEST_CASE("planted motifs carry their atom types") {
    const auto d = mk::synthesize_dataset({300, 16, 6, 4});
    for (const auto& m : d.molecules) {
        int t1 = 0, t2 = 0, t3 = 0;
        for (int a : m.atoms) {
            t1 += a == 1;
            t2 += a == 2;
            t3 += a == 3;
        }
        CHECK(t1 == int(m.motifs.at("amine")));
        CHECK(t2 == int(m.motifs.at("hydroxyl")) + int(m.motifs.at("triangle")));
        CHECK(t3 == int(m.motifs.at("hydroxyl")) + int(m.motifs.at("amine")));
        // ring backbones close a cycle: bonds = atoms for ring, atoms - 1 for chain,
        // plus one extra bond per triangle.
        const std::size_t expected = m.size() - 1 + (m.motifs.at("ring") ? 1 : 0) +
                                     (m.motifs.at("triangle") ? 1 : 0);
        CHECK(m.bonds.size() == expected);
    }
}

TEST_CASE("synthesis parameter errors") {
    CHECK_THROWS_AS(mk::synthesize_dataset({10, 16, 3, 0}), repcond::ParameterError);
    CHECK_THROWS_AS(mk::synthesize_dataset({0, 16, 6, 0}), repcond::ParameterError);
    CHECK_THROWS_AS(mk::synthesize_dataset({10, 4, 6, 0}), repcond::ParameterError);
    CHECK_NOTHROW(mk::synthesize_dataset({50, 5, 4, 0}));
}

TEST_CASE("perturb_coords") {
    auto m = mk::synthesize_dataset({1, 12, 6, 1}).molecules[0];
    m.mask.back() = false;
    m.bonds.erase(std::remove_if(m.bonds.begin(), m.bonds.end(),
                                 [&](const mk::Bond& b) { return b.j == m.size() - 1; }),
                  m.bonds.end());
    const auto tiny = mk::perturb_coords(m, 1e-12, 5);
    for (std::size_t i = 0; i < m.coords.size(); ++i) CHECK(std::abs(tiny.coords[i] - m.coords[i]) <= 6e-12);
    CHECK(mk::perturb_coords(m, 0.3, 9) == mk::perturb_coords(m, 0.3, 9));
    const auto p = mk::perturb_coords(m, 0.3, 9);
    for (std::size_t k = 0; k < 3; ++k) CHECK(p.coords.at(m.size() - 1, k) == m.coords.at(m.size() - 1, k));
    CHECK(p.atoms == m.atoms);
    CHECK(p.bonds == m.bonds);
    CHECK(p.motifs == m.motifs);
}

TEST_CASE("perturb_coords noise has the requested standard deviation") {
    mk::Molecule m;
    m.atoms.assign(10, 0);
    m.mask.assign(10, true);
    m.coords = mk::Array(repcond::diffmath::Shape{10, 3});
    const double sigma = 0.37;
    double ss = 0, s = 0;
    std::size_t n = 0;
    for (std::uint64_t seed = 0; n < 100000; ++seed) {
        const auto p = mk::perturb_coords(m, sigma, seed);
        for (double v : p.coords.data()) {
            s += v;
            ss += v * v;
            ++n;
        }
    }
    const double mean = s / n;
    const double sd = std::sqrt(ss / n - mean * mean);
    CHECK(std::abs(sd - sigma) / sigma < 0.02);
}

TEST_CASE("dataset JSON-lines round trip is bit exact") {
    const auto d = mk::synthesize_dataset({200, 16, 7, 12});
    const auto path = temp_file("roundtrip.jsonl");
    mk::save_dataset(d, path);
    const auto back = mk::load_dataset(path);
    CHECK(back == d);
    for (std::size_t i = 0; i < d.molecules.size(); ++i) {
        CHECK(std::memcmp(back.molecules[i].coords.data().data(), d.molecules[i].coords.data().data(),
                          d.molecules[i].coords.size() * sizeof(double)) == 0);
    }
    std::filesystem::remove(path);
}

TEST_CASE("dataset loading errors") {
    const auto path = temp_file("errors.jsonl");
    write_text(path, "");
    CHECK_THROWS_WITH_AS(mk::load_dataset(path), doctest::Contains("no molecules"), repcond::ParseError);

    const std::string good =
        R"({"coords":[[0,0,0],[1,0,0]],"atoms":[0,2],"bonds":[[0,1,1]],"mask":[true,true],"motifs":{}})";
    write_text(path, good + "\n");
    const auto one = mk::load_dataset(path);
    CHECK(one.molecules.size() == 1);
    CHECK(one.train.size() == 1);

    write_text(path, good + "\n{\"coords\": [[0,0,0]\n");
    CHECK_THROWS_WITH_AS(mk::load_dataset(path), doctest::Contains("line 2"), repcond::ParseError);

    write_text(path, R"({"coords":[[0,0,0],[1,0,0]],"atoms":[0,2],"bonds":[[0,5,1]],"mask":[true,true]})");
    CHECK_THROWS_WITH_AS(mk::load_dataset(path), doctest::Contains("line 1"), repcond::ValidationError);
    std::filesystem::remove(path);
}

TEST_CASE("rigid transforms and permutations") {
    const auto m = mk::synthesize_dataset({1, 10, 6, 2}).molecules[0];
    const auto r = mk::random_rotation(3);
    for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t b = 0; b < 3; ++b) {
            double s = 0;
            for (std::size_t k = 0; k < 3; ++k) s += r[a][k] * r[b][k];
            CHECK(s == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-12));
        }
    }
    std::vector<std::size_t> perm(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) perm[i] = (i + 3) % m.size();
    const auto p = mk::permute(m, perm);
    mk::validate(p);
    CHECK(p.atoms[perm[0]] == m.atoms[0]);
}
