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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "repcond/diagnostics/diagnostics.hpp"
#include "repcond/errors.hpp"
#include "repcond/molkit/molecule.hpp"
#include "repcond/rng.hpp"

namespace dm = repcond::diffmath;
namespace dg = repcond::diagnostics;
using repcond::molkit::Molecule;

namespace {

dm::Array random_matrix(std::size_t n, std::size_t d, std::uint64_t seed, double scale = 1.0) {
    repcond::Rng rng(seed);
    dm::Array z(dm::Shape{n, d});
    for (auto& v : z.data()) v = scale * rng.normal();
    return z;
}

dm::Array from_rows(std::vector<std::vector<double>> rows) {
    dm::Array z(dm::Shape{rows.size(), rows[0].size()});
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) z.at(i, j) = rows[i][j];
    return z;
}

dm::Array rotate_columns(const dm::Array& z, std::uint64_t seed) {
    const dm::Array g = random_matrix(z.cols(), z.cols(), seed);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g.mat());
    const Eigen::MatrixXd q = qr.householderQ();
    dm::Array out(z.shape());
    out.mat() = z.mat() * q;
    return out;
}

Molecule toy_molecule(std::size_t n, std::uint64_t seed) {
    Molecule m;
    m.coords = random_matrix(n, 3, seed);
    m.atoms.assign(n, 0);
    m.mask.assign(n, true);
    return m;
}

dm::Array flatten(const Molecule& m) { return dm::Array(dm::Shape{m.coords.size()}, {m.coords.data().begin(), m.coords.data().end()}); }

bool same(const dm::Array& a, const dm::Array& b) {
    return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

long double ld_dist(const dm::Array& z, std::size_t i, std::size_t j) {
    long double s = 0;
    for (std::size_t c = 0; c < z.cols(); ++c) {
        const long double d = static_cast<long double>(z.at(i, c)) - z.at(j, c);
        s += d * d;
    }
    return std::sqrt(s);
}

repcond::encoder::LayerStack stack_of(std::vector<std::vector<double>> layers) {
    repcond::encoder::LayerStack s;
    for (auto& g : layers) s.graph_feats.emplace_back(dm::Shape{g.size()}, g);
    return s;
}

} // namespace

TEST_CASE("effective rank of simple spectra") {
    CHECK(dg::spectral_effective_rank({0.5, 0.5}) == 2.0);
    CHECK(dg::spectral_effective_rank({3.0, 0.0, 0.0}) == 1.0);
    CHECK(dg::spectral_effective_rank({0.0, 0.0}) == 1.0);

    // k orthonormal directions with equal variance
    repcond::Rng rng(5);
    const std::size_t n = 4000, k = 4;
    dm::Array z(dm::Shape{n, 12});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c) z.at(i, c) = rng.normal();
    const dm::Array zr = rotate_columns(z, 6);
    CHECK(dg::effective_rank(zr) == doctest::Approx(4.0).epsilon(0.05));

    dm::Array r1(dm::Shape{50, 6});
    for (std::size_t i = 0; i < 50; ++i)
        for (std::size_t c = 0; c < 6; ++c) r1.at(i, c) = (double(i) - 7.3) * (1.0 + c);
    CHECK(std::abs(dg::effective_rank(r1) - 1.0) < 1e-6);

    CHECK(dg::effective_rank(dm::Array(dm::Shape{5, 3}, 2.5)) == 1.0);
}

TEST_CASE("effective rank is rotation and scale invariant and bounded") {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const dm::Array z = random_matrix(30, 8, 100 + s, 1.0 + s);
        const double er = dg::effective_rank(z);
        CHECK(er >= 1.0);
        CHECK(er <= 8.0);
        CHECK(std::abs(dg::effective_rank(rotate_columns(z, 200 + s)) - er) < 1e-6);
        dm::Array scaled = z;
        for (auto& v : scaled.data()) v *= 37.5;
        CHECK(std::abs(dg::effective_rank(scaled) - er) < 1e-9);
    }
    // N < D bounds the rank by N - 1 after centering
    CHECK(dg::effective_rank(random_matrix(4, 20, 3)) <= 3.0 + 1e-9);
}

TEST_CASE("representation matrix validation") {
    CHECK_THROWS_AS(dg::effective_rank(dm::Array(dm::Shape{1, 3})), repcond::ParameterError);
    CHECK_THROWS_AS(dg::effective_rank(dm::Array(dm::Shape{4})), repcond::ParameterError);
    dm::Array z = random_matrix(4, 3, 1);
    z.at(2, 1) = std::nan("");
    CHECK_THROWS_AS(dg::pairwise_stats(z), repcond::ParameterError);
}

TEST_CASE("Lipschitz of linear and constant maps") {
    std::vector<Molecule> mols;
    for (std::uint64_t s = 0; s < 7; ++s) mols.push_back(toy_molecule(3 + s % 4, 10 + s));

    const auto scaled = [](const Molecule& m) {
        dm::Array f = flatten(m);
        for (auto& v : f.data()) v *= 3.0;
        return f;
    };
    const auto lip = dg::empirical_lipschitz(scaled, mols, 1e-3, 100, 4);
    CHECK(lip.ratios.size() == 100);
    CHECK(std::abs(lip.max - 3.0) < 1e-6);
    CHECK(std::abs(lip.mean - 3.0) < 1e-6);

    const auto constant = [](const Molecule&) { return dm::Array(dm::Shape{5}, 1.25); };
    const auto zero = dg::empirical_lipschitz(constant, mols, 1e-3, 20, 4);
    CHECK(zero.max == 0.0);
    CHECK(zero.mean == 0.0);

    // all molecules with 4 atoms so one matrix applies
    std::vector<Molecule> four;
    for (std::uint64_t s = 0; s < 5; ++s) four.push_back(toy_molecule(4, 50 + s));
    const dm::Array a = random_matrix(6, 12, 77);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a.mat());
    const double sigma_max = svd.singularValues()[0];
    const auto linear = [&](const Molecule& m) {
        dm::Array out(dm::Shape{6});
        out.mat() = (a.mat() * flatten(m).mat().transpose()).transpose();
        return out;
    };
    const auto lin = dg::empirical_lipschitz(linear, four, 1e-3, 100, 8);
    for (double r : lin.ratios) CHECK(r <= sigma_max + 1e-9);
    CHECK(lin.max >= lin.mean);
    CHECK(lin.mean > 0);
}

TEST_CASE("Lipschitz probes are deterministic and only move valid atoms") {
    std::vector<Molecule> mols{toy_molecule(5, 1)};
    mols[0].mask[4] = false;
    mols[0].coords.at(4, 0) = mols[0].coords.at(4, 1) = mols[0].coords.at(4, 2) = 0;
    const auto pad_only = [](const Molecule& m) {
        dm::Array f(dm::Shape{3});
        for (std::size_t c = 0; c < 3; ++c) f[c] = m.coords.at(4, c);
        return f;
    };
    CHECK(dg::empirical_lipschitz(pad_only, mols, 1e-3, 10, 2).max == 0.0);

    const auto f = [](const Molecule& m) {
        dm::Array out = flatten(m);
        for (auto& v : out.data()) v = std::sin(v);
        return out;
    };
    const auto a = dg::empirical_lipschitz(f, mols, 1e-3, 10, 2);
    const auto b = dg::empirical_lipschitz(f, mols, 1e-3, 10, 2);
    CHECK(a.ratios == b.ratios);

    CHECK_THROWS_AS(dg::empirical_lipschitz(f, mols, 0.0, 10, 2), repcond::ParameterError);
    CHECK_THROWS_AS(dg::empirical_lipschitz(f, mols, 1e-3, 0, 2), repcond::ParameterError);
    const auto bad = [](const Molecule&) { return dm::Array(dm::Shape{2}, std::nan("")); };
    try {
        dg::empirical_lipschitz(bad, mols, 1e-3, 3, 2);
        FAIL("expected NumericError");
    } catch (const repcond::NumericError& e) {
        CHECK(std::string(e.what()).find("molecule 0") != std::string::npos);
    }
}

TEST_CASE("pairwise statistics") {
    const auto two = dg::pairwise_stats(from_rows({{0, 0}, {3, 4}}));
    CHECK(two.mean == 5.0);
    CHECK(two.std == 0.0);
    CHECK(two.median == 5.0);
    CHECK(two.p10 == 5.0);
    CHECK(two.p90 == 5.0);

    const auto line = dg::pairwise_stats(from_rows({{0}, {1}, {2}}));
    CHECK(line.mean == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
    CHECK(line.median == 1.0);

    CHECK(dg::percentile({4, 1, 3, 2}, 0.5) == 2.5);
    CHECK(dg::percentile({4, 1, 3, 2}, 0.1) == doctest::Approx(1.3));
    CHECK_THROWS_AS(dg::percentile({}, 0.5), repcond::ParameterError);

    const dm::Array z = random_matrix(50, 7, 9, 2.0);
    std::vector<long double> d;
    for (std::size_t i = 0; i < 50; ++i)
        for (std::size_t j = i + 1; j < 50; ++j) d.push_back(ld_dist(z, i, j));
    long double mean = 0;
    for (auto v : d) mean += v;
    mean /= d.size();
    long double var = 0;
    for (auto v : d) var += (v - mean) * (v - mean);
    var /= d.size();
    std::sort(d.begin(), d.end());
    auto pct = [&](long double q) {
        const long double pos = q * (d.size() - 1);
        const auto lo = static_cast<std::size_t>(pos);
        return d[lo] + (pos - lo) * (d[std::min(lo + 1, d.size() - 1)] - d[lo]);
    };
    const auto s = dg::pairwise_stats(z);
    CHECK(std::abs(s.mean - double(mean)) < 1e-12);
    CHECK(std::abs(s.std - double(std::sqrt(var))) < 1e-12);
    CHECK(std::abs(s.median - double(pct(0.5L))) < 1e-12);
    CHECK(std::abs(s.p10 - double(pct(0.1L))) < 1e-12);
    CHECK(std::abs(s.p90 - double(pct(0.9L))) < 1e-12);
    CHECK(s.p10 <= s.median);
    CHECK(s.median <= s.p90);

    dm::Array moved = rotate_columns(z, 31);
    for (std::size_t i = 0; i < 50; ++i)
        for (std::size_t c = 0; c < 7; ++c) moved.at(i, c) += 4.0 - c;
    const auto m = dg::pairwise_stats(moved);
    CHECK(std::abs(m.mean - s.mean) < 1e-9);
    CHECK(std::abs(m.std - s.std) < 1e-9);
    CHECK(std::abs(m.median - s.median) < 1e-9);
    CHECK(std::abs(m.p90 - s.p90) < 1e-9);
}

TEST_CASE("k-NN average distance") {
    CHECK(dg::knn_smoothness(from_rows({{0}, {1}, {2}}), 1) == 1.0);
    CHECK(dg::knn_smoothness(from_rows({{1, 2}, {1, 2}, {5, 5}, {5, 5}}), 1) == 0.0);
    CHECK_THROWS_AS(dg::knn_smoothness(from_rows({{0}, {1}, {2}}), 3), repcond::ParameterError);
    CHECK_THROWS_AS(dg::knn_smoothness(from_rows({{0}, {1}, {2}}), 0), repcond::ParameterError);

    const dm::Array z = random_matrix(40, 5, 21);
    for (int k : {1, 3, 10, 39}) {
        long double total = 0;
        for (std::size_t i = 0; i < 40; ++i) {
            std::vector<long double> d;
            for (std::size_t j = 0; j < 40; ++j)
                if (j != i) d.push_back(ld_dist(z, i, j));
            std::sort(d.begin(), d.end());
            long double s = 0;
            for (int q = 0; q < k; ++q) s += d[q];
            total += s / k;
        }
        const double got = dg::knn_smoothness(z, k);
        CHECK(std::abs(got - double(total / 40)) < 1e-12);
        dm::Array moved = rotate_columns(z, 3);
        for (auto& v : moved.data()) v += 2.5;
        CHECK(std::abs(dg::knn_smoothness(moved, k) - got) < 1e-9);
    }
}

TEST_CASE("cross-layer similarity") {
    std::vector<repcond::encoder::LayerStack> stacks{
        stack_of({{1, 0}, {1, 1}}),
        stack_of({{1, 0}, {1, -1}}),
    };
    // layer means (1, 0) and (1, 0): cosine 1
    dm::Array s = dg::cross_layer_similarity(stacks);
    CHECK(s.at(0, 1) == doctest::Approx(1.0));

    stacks = {stack_of({{1, 0}, {0, 2}}), stack_of({{3, 0}, {2, 0}})};
    // means (2, 0) and (1, 1)
    s = dg::cross_layer_similarity(stacks);
    CHECK(s.at(0, 1) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-14));
    CHECK(s.at(1, 0) == s.at(0, 1));

    std::vector<repcond::encoder::LayerStack> random;
    repcond::Rng rng(3);
    for (int i = 0; i < 9; ++i) {
        std::vector<std::vector<double>> layers(4, std::vector<double>(6));
        for (auto& l : layers)
            for (auto& v : l) v = rng.normal();
        random.push_back(stack_of(layers));
    }
    const dm::Array base = dg::cross_layer_similarity(random);
    for (std::size_t l = 0; l < 4; ++l) CHECK(std::abs(base.at(l, l) - 1.0) < 1e-12);
    auto doubled = random;
    doubled.insert(doubled.end(), random.begin(), random.end());
    const dm::Array dup = dg::cross_layer_similarity(doubled);
    for (std::size_t k = 0; k < base.size(); ++k) CHECK(std::abs(dup[k] - base[k]) < 1e-12);
    CHECK_THROWS_AS(dg::cross_layer_similarity({random[0]}), repcond::ParameterError);
}

TEST_CASE("PCA explained variance") {
    const dm::Array iso = random_matrix(5000, 2, 17);
    const auto p = dg::pca_layer_variance(iso);
    REQUIRE(p.explained.size() == 2);
    CHECK(p.explained[0] == doctest::Approx(0.5).epsilon(0.05));
    CHECK(p.explained[1] == doctest::Approx(0.5).epsilon(0.05));

    dm::Array r1(dm::Shape{20, 3});
    for (std::size_t i = 0; i < 20; ++i)
        for (std::size_t c = 0; c < 3; ++c) r1.at(i, c) = std::sin(double(i)) * (c + 1.0);
    const auto q = dg::pca_layer_variance(r1);
    CHECK(q.explained[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(q.explained[1] < 1e-12);
    CHECK(q.explained[2] < 1e-12);

    const dm::Array z = random_matrix(60, 9, 23);
    const auto r = dg::pca_layer_variance(z);
    double sum = 0;
    for (double v : r.explained) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-9);
    Eigen::MatrixXd c = z.mat();
    c.rowwise() -= c.colwise().mean();
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(c.transpose() * c).eigenvalues().reverse();
    for (std::size_t i = 0; i < 9; ++i) CHECK(std::abs(r.explained[i] - ev[i] / ev.sum()) < 1e-9);
    for (std::size_t i = 1; i < 9; ++i) CHECK(r.explained[i] <= r.explained[i - 1]);
    CHECK(r.effective_rank == doctest::Approx(dg::effective_rank(z)));
    CHECK(dg::pca_layer_variance(z, 3).explained.size() == 3);
}

TEST_CASE("linear probe oracles") {
    repcond::Rng rng(41);
    const std::size_t n = 2000, d = 6;
    dm::Array x = random_matrix(n, d, 42);
    std::vector<bool> coin(n), separable(n);
    for (std::size_t i = 0; i < n; ++i) {
        coin[i] = rng.bernoulli(0.5);
        separable[i] = x.at(i, 1) - 0.5 * x.at(i, 2) + 0.2 > 0;
    }
    dg::ProbeConfig cfg;
    cfg.split_seed = 7;

    CHECK(dg::linear_probe(x, separable, cfg).balanced_accuracy >= 0.99);

    const double chance = dg::linear_probe(x, coin, cfg).balanced_accuracy;
    CHECK(chance >= 0.4);
    CHECK(chance <= 0.6);

    // With 500 plain GD steps the fitted boundary still tilts by roughly
    // sqrt(D / N_train); N = 2000 lands near 0.985, so this oracle uses 10k rows.
    const std::size_t big = 10000;
    const dm::Array xb = random_matrix(big, d, 43);
    std::vector<bool> sign0(big);
    for (std::size_t i = 0; i < big; ++i) sign0[i] = xb.at(i, 0) > 0;
    const auto planted = dg::linear_probe(xb, sign0, cfg);
    CHECK(planted.balanced_accuracy >= 0.99);
    std::size_t arg = 0;
    for (std::size_t c = 1; c < d; ++c)
        if (std::abs(planted.weights[c]) > std::abs(planted.weights[arg])) arg = c;
    CHECK(arg == 0);

    std::vector<bool> swapped(big);
    for (std::size_t i = 0; i < big; ++i) swapped[i] = !sign0[i];
    CHECK(dg::linear_probe(xb, swapped, cfg).balanced_accuracy == planted.balanced_accuracy);
    std::vector<bool> swapped_coin(n);
    for (std::size_t i = 0; i < n; ++i) swapped_coin[i] = !coin[i];
    CHECK(dg::linear_probe(x, swapped_coin, cfg).balanced_accuracy == chance);

    // same seed, same answer
    CHECK(dg::linear_probe(x, coin, cfg).balanced_accuracy == chance);
}

TEST_CASE("linear probe input errors") {
    const dm::Array x = random_matrix(40, 3, 1);
    CHECK_THROWS_AS(dg::linear_probe(x, std::vector<bool>(40, true)), repcond::ParameterError);
    std::vector<bool> few(40, false);
    for (int i = 0; i < 4; ++i) few[i] = true;
    CHECK_THROWS_AS(dg::linear_probe(x, few), repcond::ParameterError);
    CHECK_THROWS_AS(dg::linear_probe(x, std::vector<bool>(39, false)), repcond::ParameterError);
    few[4] = true;
    const auto out = dg::linear_probe(x, few);
    CHECK(out.balanced_accuracy >= 0.0);
    CHECK(out.balanced_accuracy <= 1.0);
}

TEST_CASE("probe CSV has a layer-delta row") {
    dg::ProbeResult r;
    r.motifs = {"hydroxyl", "ring"};
    r.accuracy = {{0.9, 0.8}, {0.7, 0.85}};
    std::ostringstream os;
    dg::write_probe_csv(os, r);
    CHECK(os.str() == "layer,hydroxyl,ring\nL0,0.900000,0.800000\nL1,0.700000,0.850000\nL0-L1,0.200000,-0.050000\n");
}

TEST_CASE("geometry CSV column order") {
    dg::GeometryReport g;
    g.source = "raw";
    g.effective_rank = 2;
    g.knn_k = 5;
    std::ostringstream os;
    dg::write_geometry_csv(os, {g});
    const std::string s = os.str();
    CHECK(s.rfind("source,effective_rank,lipschitz_mean,lipschitz_max,pairwise_mean,pairwise_std,pairwise_median,"
                  "pairwise_p10,pairwise_p90,knn_k,knn_avg_distance\n",
                  0) == 0);
    CHECK(s.find("\nraw,2,0,0,0,0,0,0,0,5,0\n") != std::string::npos);
}

TEST_CASE("REPM1 round trip and corruption") {
    const dm::Array z = random_matrix(7, 3, 99);
    const std::string bytes = dg::encode_repm(z);
    REQUIRE(bytes.size() == 5 + 16 + 8 * 21);
    CHECK(bytes.substr(0, 5) == "REPM1");
    CHECK(static_cast<unsigned char>(bytes[5]) == 7);
    CHECK(bytes[6] == 0);
    const dm::Array back = dg::decode_repm(bytes);
    CHECK(same(back, z));

    CHECK_THROWS_AS(dg::decode_repm("REPM2" + bytes.substr(5)), repcond::CheckpointError);
    CHECK_THROWS_AS(dg::decode_repm(bytes.substr(0, bytes.size() - 1)), repcond::CheckpointError);
    CHECK_THROWS_AS(dg::decode_repm(bytes + "x"), repcond::CheckpointError);
    CHECK_THROWS_AS(dg::decode_repm("REP"), repcond::CheckpointError);

    const auto dir = std::filesystem::temp_directory_path() / "repcond_test_diag";
    std::filesystem::create_directories(dir);
    dg::write_repm(dir / "z.repm", z);
    CHECK(same(dg::read_repm(dir / "z.repm"), z));

    {
        std::ofstream os(dir / "z.csv");
        os << "dim0,dim1\n0.1,2\n-3.5e2,4\n";
    }
    const dm::Array c = dg::read_rep_csv(dir / "z.csv");
    CHECK(c.shape() == dm::Shape{2, 2});
    CHECK(c.at(0, 0) == 0.1);
    CHECK(c.at(1, 0) == -350.0);
    {
        std::ofstream os(dir / "bad.csv");
        os << "dim0,dim1\n0.1,abc\n";
    }
    CHECK_THROWS_AS(dg::read_rep_csv(dir / "bad.csv"), repcond::ParseError);
    {
        std::ofstream os(dir / "ragged.csv");
        os << "dim0,dim1\n0.1\n";
    }
    CHECK_THROWS_AS(dg::read_rep_csv(dir / "ragged.csv"), repcond::ParseError);
    std::filesystem::remove_all(dir);
}
