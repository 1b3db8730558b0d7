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

#include "repcond/molkit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "repcond/errors.hpp"
#include "repcond/rng.hpp"

namespace repcond::molkit {

namespace {

using V3 = std::array<double, 3>;

V3 operator+(V3 a, V3 b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
V3 operator-(V3 a, V3 b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
V3 operator*(double s, V3 a) { return {s * a[0], s * a[1], s * a[2]}; }
double dot(V3 a, V3 b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
V3 cross(V3 a, V3 b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
V3 normalized(V3 a) { return (1.0 / std::sqrt(dot(a, a))) * a; }

/// Rodrigues rotation of v about unit axis k.
V3 rotate_about(V3 v, V3 k, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return c * v + s * cross(k, v) + (dot(k, v) * (1 - c)) * k;
}

constexpr double kJitter = 0.1;

struct Builder {
    std::vector<V3> pos;
    std::vector<int> types;
    std::vector<Bond> bonds;

    std::size_t add(V3 p, int type) {
        pos.push_back(p);
        types.push_back(type);
        return pos.size() - 1;
    }
    void bond(std::size_t a, std::size_t b, int order) {
        bonds.push_back(Bond{std::min(a, b), std::max(a, b), order});
    }
};

Molecule synthesize_one(const SynthConfig& cfg, Rng& rng) {
    bool ring = rng.bernoulli(0.5);
    bool hydroxyl = rng.bernoulli(0.45);
    bool amine = rng.bernoulli(0.45);
    bool triangle = rng.bernoulli(0.45);

    auto min_backbone = [&] {
        const int sites = (triangle ? 2 : 0) + (hydroxyl ? 1 : 0) + (amine ? 1 : 0);
        return std::max(ring ? 4 : 3, sites);
    };
    auto extras = [&] { return 2 * int(hydroxyl) + 2 * int(amine) + int(triangle); };
    // Small molecules cannot host every motif; drop them in a fixed order.
    while (min_backbone() + extras() > cfg.max_atoms) {
        if (triangle) triangle = false;
        else if (amine) amine = false;
        else if (hydroxyl) hydroxyl = false;
        else ring = false;
    }
    const int n_backbone = static_cast<int>(rng.uniform_int(min_backbone(), cfg.max_atoms - extras()));

    Builder b;
    auto backbone_type = [&]() -> int {
        if (cfg.vocab > kMotifTypeCount && rng.bernoulli(0.4)) {
            return static_cast<int>(rng.uniform_int(kMotifTypeCount, cfg.vocab - 1));
        }
        return 0;
    };
    auto backbone_order = [&] { return rng.bernoulli(0.2) ? 2 : 1; };

    const V3 normal{0, 0, 1};
    if (ring) {
        const double radius = 0.5 / std::sin(std::numbers::pi / n_backbone);
        const double phase = 2 * std::numbers::pi * rng.uniform();
        for (int k = 0; k < n_backbone; ++k) {
            const double a = phase + 2 * std::numbers::pi * k / n_backbone;
            b.add({radius * std::cos(a), radius * std::sin(a), 0.0}, backbone_type());
        }
        for (int k = 0; k < n_backbone; ++k) {
            b.bond(k, (k + 1) % n_backbone, backbone_order());
        }
    } else {
        // Zigzag chain: unit bonds, 120 degree angles and small out-of-plane
        // tilts, each jittered by at most kJitter radians.
        double heading = 0.0;
        b.add({0, 0, 0}, backbone_type());
        for (int k = 1; k < n_backbone; ++k) {
            if (k > 1) {
                const double turn = std::numbers::pi / 3 + kJitter * (2 * rng.uniform() - 1);
                heading += (k % 2 == 0 ? 1.0 : -1.0) * turn;
            }
            const double tilt = kJitter * (2 * rng.uniform() - 1);
            const V3 step{std::cos(tilt) * std::cos(heading), std::cos(tilt) * std::sin(heading),
                          std::sin(tilt)};
            b.add(b.pos.back() + step, backbone_type());
            b.bond(k - 1, k, backbone_order());
        }
    }

    V3 centroid{0, 0, 0};
    for (const auto& p : b.pos) centroid = centroid + p;
    centroid = (1.0 / n_backbone) * centroid;

    auto outward = [&](int k) -> V3 {
        if (ring) return normalized(b.pos[k] - centroid);
        if (k == 0) return normalized(b.pos[0] - b.pos[1]);
        if (k == n_backbone - 1) return normalized(b.pos[k] - b.pos[k - 1]);
        V3 o = (b.pos[k] - b.pos[k - 1]) + (b.pos[k] - b.pos[k + 1]);
        if (dot(o, o) < 1e-12) o = cross(b.pos[k + 1] - b.pos[k - 1], normal);
        return normalized(o);
    };

    std::vector<int> free_sites(n_backbone);
    std::iota(free_sites.begin(), free_sites.end(), 0);
    auto take_site = [&](int k) { free_sites.erase(std::find(free_sites.begin(), free_sites.end(), k)); };

    if (triangle) {
        const int span = ring ? n_backbone : n_backbone - 1;
        const int k = static_cast<int>(rng.uniform_int(0, span - 1));
        const int k2 = (k + 1) % n_backbone;
        const V3 mid = 0.5 * (b.pos[k] + b.pos[k2]);
        V3 perp = normalized(cross(b.pos[k2] - b.pos[k], normal));
        if (dot(perp, mid - centroid) < 0) perp = -1.0 * perp;
        const double h = std::sqrt(1.0 - 0.25 * dot(b.pos[k2] - b.pos[k], b.pos[k2] - b.pos[k]));
        const auto apex = b.add(mid + h * perp, 2);
        b.bond(k, apex, 1);
        b.bond(k2, apex, 1);
        take_site(k);
        take_site(k2);
    }

    auto attach_pair = [&](int first_type, int second_type, double bend) {
        const auto idx = static_cast<std::size_t>(rng.uniform_int(0, std::int64_t(free_sites.size()) - 1));
        const int k = free_sites[idx];
        take_site(k);
        const V3 o = outward(k);
        V3 axis = cross(o, normal);
        axis = dot(axis, axis) < 1e-12 ? V3{1, 0, 0} : normalized(cross(axis, o));
        const auto a = b.add(b.pos[k] + o, first_type);
        const double angle = bend + kJitter * (2 * rng.uniform() - 1);
        const auto c = b.add(b.pos[a] + rotate_about(o, axis, angle), second_type);
        b.bond(k, a, 1);
        b.bond(a, c, 1);
    };
    if (hydroxyl) attach_pair(2, 3, std::numbers::pi / 3);
    if (amine) attach_pair(1, 3, -std::numbers::pi / 3);

    Molecule m;
    const std::size_t n = b.pos.size();
    m.coords = Array(diffmath::Shape{n, 3});
    const Mat3 rot = random_rotation(rng.engine()());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < 3; ++a) {
            double s = 0;
            for (std::size_t c = 0; c < 3; ++c) s += rot[a][c] * b.pos[i][c];
            m.coords.at(i, a) = s;
        }
    }
    m.atoms = b.types;
    m.bonds = b.bonds;
    std::sort(m.bonds.begin(), m.bonds.end(),
              [](const Bond& x, const Bond& y) { return std::tie(x.i, x.j) < std::tie(y.i, y.j); });
    m.mask.assign(n, true);
    m.motifs = {{"hydroxyl", hydroxyl}, {"amine", amine}, {"triangle", triangle}, {"ring", ring}};
    remove_center_of_mass(m.coords, m.mask);
    return m;
}

} // namespace

std::vector<Molecule> Dataset::subset(const std::vector<std::size_t>& index) const {
    std::vector<Molecule> out;
    out.reserve(index.size());
    for (auto i : index) out.push_back(molecules.at(i));
    return out;
}

Dataset synthesize_dataset(const SynthConfig& cfg) {
    if (cfg.count < 1) {
        throw ParameterError("synthesize_dataset: count must be positive");
    }
    if (cfg.max_atoms < 5 || cfg.max_atoms > 24) {
        throw ParameterError("synthesize_dataset: max_atoms must be in [5, 24]");
    }
    if (cfg.vocab < kMotifTypeCount) {
        throw ParameterError("synthesize_dataset: vocab " + std::to_string(cfg.vocab) +
                             " is smaller than the " + std::to_string(kMotifTypeCount) +
                             " motif-defining atom types");
    }
    Dataset d;
    d.seed = cfg.seed;
    d.molecules.reserve(cfg.count);
    for (std::size_t k = 0; k < cfg.count; ++k) {
        Rng rng(derive_seed(cfg.seed, "molecule", k));
        d.molecules.push_back(synthesize_one(cfg, rng));
    }
    std::vector<std::size_t> order(cfg.count);
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng(derive_seed(cfg.seed, "split"));
    std::shuffle(order.begin(), order.end(), split_rng.engine());
    const std::size_t n_train = std::max<std::size_t>(1, cfg.count * 8 / 10);
    const std::size_t n_val = std::min(cfg.count - n_train, cfg.count / 10);
    d.train.assign(order.begin(), order.begin() + n_train);
    d.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
    d.test.assign(order.begin() + n_train + n_val, order.end());
    for (auto* s : {&d.train, &d.val, &d.test}) std::sort(s->begin(), s->end());
    return d;
}

void validate_splits(const Dataset& d) {
    std::vector<int> seen(d.molecules.size(), 0);
    for (const auto* s : {&d.train, &d.val, &d.test}) {
        for (auto i : *s) {
            if (i >= seen.size()) throw ValidationError("split index out of range");
            if (seen[i]++) throw ValidationError("splits overlap at index " + std::to_string(i));
        }
    }
    for (std::size_t i = 0; i < seen.size(); ++i) {
        if (!seen[i]) throw ValidationError("molecule " + std::to_string(i) + " is in no split");
    }
}

namespace {

nlohmann::json molecule_json(const Molecule& m) {
    nlohmann::json coords = nlohmann::json::array();
    for (std::size_t i = 0; i < m.size(); ++i) {
        coords.push_back({m.coords.at(i, 0), m.coords.at(i, 1), m.coords.at(i, 2)});
    }
    nlohmann::json bonds = nlohmann::json::array();
    for (const auto& b : m.bonds) bonds.push_back({b.i, b.j, b.order});
    nlohmann::json mask = nlohmann::json::array();
    for (bool v : m.mask) mask.push_back(v);
    return {{"coords", coords}, {"atoms", m.atoms}, {"bonds", bonds}, {"mask", mask}, {"motifs", m.motifs}};
}

Molecule molecule_from_json(const nlohmann::json& j) {
    Molecule m;
    m.atoms = j.at("atoms").get<std::vector<int>>();
    const std::size_t n = m.atoms.size();
    const auto& coords = j.at("coords");
    if (coords.size() != n) {
        throw ValidationError("coords has " + std::to_string(coords.size()) + " rows for " +
                              std::to_string(n) + " atoms");
    }
    m.coords = Array(diffmath::Shape{n, 3});
    for (std::size_t i = 0; i < n; ++i) {
        if (coords[i].size() != 3) throw ValidationError("coordinate row must have 3 entries");
        for (std::size_t k = 0; k < 3; ++k) m.coords.at(i, k) = coords[i][k].get<double>();
    }
    for (const auto& b : j.at("bonds")) {
        if (b.size() != 3) throw ValidationError("bond must be [i, j, order]");
        const auto i = b[0].get<std::int64_t>(), k = b[1].get<std::int64_t>();
        if (i < 0 || k < 0) throw ValidationError("negative bond index");
        m.bonds.push_back(Bond{static_cast<std::size_t>(i), static_cast<std::size_t>(k), b[2].get<int>()});
    }
    if (j.contains("mask")) {
        m.mask = j.at("mask").get<std::vector<bool>>();
    } else {
        m.mask.assign(n, true);
    }
    if (j.contains("motifs")) {
        m.motifs = j.at("motifs").get<std::map<std::string, bool>>();
    }
    validate(m);
    return m;
}

} // namespace

std::string to_json_line(const Molecule& m) { return molecule_json(m).dump(); }

Molecule from_json_line(const std::string& line) {
    try {
        return molecule_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(e.what());
    }
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
    validate_splits(d);
    std::vector<const char*> split(d.molecules.size(), "train");
    for (auto i : d.val) split[i] = "val";
    for (auto i : d.test) split[i] = "test";
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    for (std::size_t i = 0; i < d.molecules.size(); ++i) {
        auto j = molecule_json(d.molecules[i]);
        j["split"] = split[i];
        if (i == 0) j["seed"] = d.seed;
        out << j.dump() << '\n';
    }
    if (!out) throw Error("failed writing '" + path.string() + "'");
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open dataset '" + path.string() + "'");
    Dataset d;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
        }
        Molecule m;
        try {
            m = molecule_from_json(j);
        } catch (const ValidationError& e) {
            throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
        }
        const std::size_t idx = d.molecules.size();
        d.molecules.push_back(std::move(m));
        if (j.contains("seed")) d.seed = j.at("seed").get<std::uint64_t>();
        const std::string split = j.value("split", "");
        if (split == "val") d.val.push_back(idx);
        else if (split == "test") d.test.push_back(idx);
        else if (split == "train" || split.empty()) d.train.push_back(idx);
        else throw ParseError("line " + std::to_string(lineno) + ": unknown split '" + split + "'");
    }
    if (d.molecules.empty()) {
        throw ParseError("no molecules in '" + path.string() + "'");
    }
    return d;
}

} // namespace repcond::molkit
