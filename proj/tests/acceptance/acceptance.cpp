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

// Acceptance runner: one PASS/FAIL line per criterion. Long end-to-end runs
// are cached under --work and reused when their config and hashes match.

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include "gradcheck.hpp"
#include "repcond/diagnostics/diagnostics.hpp"
#include "repcond/diffmath/ops.hpp"
#include "repcond/diffmath/param_store.hpp"
#include "repcond/diffmath/runtime.hpp"
#include "repcond/encoder/encoder.hpp"
#include "repcond/errors.hpp"
#include "repcond/generator/generator.hpp"
#include "repcond/molkit/dataset.hpp"
#include "repcond/molkit/molecule.hpp"
#include "repcond/objectives/objectives.hpp"
#include "repcond/pipeline/config.hpp"
#include "repcond/pipeline/manifest.hpp"
#include "repcond/pipeline/phases.hpp"
#include "repcond/rephead/rephead.hpp"
#include "repcond/rng.hpp"

namespace fs = std::filesystem;
namespace dm = repcond::diffmath;
namespace dg = repcond::diagnostics;
namespace enc = repcond::encoder;
namespace gen = repcond::generator;
namespace mk = repcond::molkit;
namespace ob = repcond::objectives;
namespace rh = repcond::rephead;
namespace rp = repcond::pipeline;
using repcond::derive_seed;
using repcond::Rng;

namespace {

struct Verdict {
    bool pass = true;
    std::vector<std::string> notes;

    void need(bool ok, const std::string& what) {
        if (!ok) pass = false;
        notes.push_back(ok ? what : "NOT " + what);
    }
    void note(const std::string& what) { notes.push_back(what); }
};

struct Env {
    fs::path work;
    fs::path cli;
};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

dm::Array random_array(dm::Shape s, Rng& rng, double scale = 1.0) {
    dm::Array a(std::move(s));
    for (auto& v : a.data()) v = scale * rng.normal();
    return a;
}

double max_abs_diff(const dm::Array& a, const dm::Array& b) {
    double w = 0;
    for (std::size_t i = 0; i < a.size(); ++i) w = std::max(w, std::abs(a[i] - b[i]));
    return w;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& bytes) {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    os << bytes;
}

// ---------------------------------------------------------------------------

Verdict kl_closed_form(const Env&) {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(derive_seed(1, "accept-kl"));
    double worst = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t d = 16;
        rh::LatentPosterior p{dm::Array(dm::Shape{d}), dm::Array(dm::Shape{d})};
        long double ref = 0;
        for (std::size_t k = 0; k < d; ++k) {
            p.mu[k] = 1.5 * rng.normal();
            p.log_var[k] = -4.0 + 6.0 * rng.uniform();
            const long double mu = p.mu[k], lv = p.log_var[k];
            ref += 1.0L + lv - mu * mu - std::exp(lv);
        }
        ref *= -0.5L;
        worst = std::max(worst, static_cast<double>(std::abs(static_cast<long double>(rh::kl_loss(p)) - ref)));
    }
    v.need(worst < 1e-12, "max |kl - extended| = " + num(worst) + " < 1e-12");

    const rh::LatentPosterior prior{dm::Array(dm::Shape{16}), dm::Array(dm::Shape{16})};
    v.need(rh::kl_loss(prior) == 0.0, "kl at the prior is exactly 0");

    // Monte-Carlo: E_q[log q(z) - log p(z)], normalizers cancel
    rh::LatentPosterior q{dm::Array::vector({0.8, -1.1, 0.3, 1.7}), dm::Array::vector({-0.7, 0.4, -1.5, 0.9})};
    long double acc = 0;
    const int samples = 1'000'000;
    for (int s = 0; s < samples; ++s) {
        long double term = 0;
        for (std::size_t k = 0; k < 4; ++k) {
            const double eps = rng.normal();
            const double z = q.mu[k] + std::exp(0.5 * q.log_var[k]) * eps;
            term += -0.5L * eps * eps - 0.5L * q.log_var[k] + 0.5L * z * z;
        }
        acc += term;
    }
    const double mc = static_cast<double>(acc / samples);
    const double exact = rh::kl_loss(q);
    const double rel = std::abs(mc - exact) / exact;
    v.need(rel < 0.01, "Monte-Carlo relative gap " + num(rel) + " < 1%");
    const double secs = seconds_since(t0);
    v.need(secs < 10, "runtime " + num(secs) + " s < 10 s");
    return v;
}

std::vector<mk::Molecule> four_atom_molecules() {
    const auto d = mk::synthesize_dataset({400, 5, 6, 41});
    std::vector<mk::Molecule> out;
    for (const auto& m : d.molecules)
        if (m.size() == 4 && m.valid_count() == 4) out.push_back(m);
    if (out.empty()) throw repcond::Error("no 4-atom molecules in the synthetic set");
    return out;
}

Verdict gradient_integrity(const Env&) {
    Verdict v;
    using repcond::testing::max_gradient_error;
    using repcond::testing::relative_error;
    const auto t0 = std::chrono::steady_clock::now();
    const auto mols = four_atom_molecules();
    Rng rng(derive_seed(2, "accept-grad"));
    const int trials = 50;

    const gen::GenConfig gcfg{2, 8, 20, 6, 4};
    auto gps = gen::init_generator(gcfg, 8);
    double w_gen = 0;
    for (int trial = 0; trial < trials; ++trial) {
        const auto& m = mols[trial % mols.size()];
        const auto st = gen::corrupt(m, gcfg, trial % gcfg.steps, trial);
        const auto z = random_array(dm::Shape{4}, rng);
        auto build = [&](dm::Tape& t, const std::vector<dm::Var>& in) {
            auto p = gen::denoise(t, gps, gcfg, in[0], in[1], st.t_index, in[2], st.mask, 1);
            return gen::gen_loss(p.coords, p.logits, m, gcfg.vocab);
        };
        w_gen = std::max(w_gen, max_gradient_error(build, {st.coords, st.atom_logits, z}));
    }
    v.need(w_gen < 1e-4, "l_gen max rel err " + num(w_gen));

    double w_kl = 0;
    const rh::HeadConfig hcfg{4};
    auto hps = rh::init_head(hcfg, 3, 8, 5);
    for (int trial = 0; trial < trials; ++trial) {
        const auto mu = random_array(dm::Shape{4}, rng);
        const auto lv = random_array(dm::Shape{4}, rng, 0.7);
        auto direct = [&](dm::Tape&, const std::vector<dm::Var>& in) { return rh::kl_loss(rh::PosteriorVars{in[0], in[1]}); };
        w_kl = std::max(w_kl, max_gradient_error(direct, {mu, lv}));
        // through the head: pooled feature -> posterior -> KL
        const auto g = random_array(dm::Shape{8}, rng, 0.35);
        auto headed = [&](dm::Tape& t, const std::vector<dm::Var>& in) { return rh::kl_loss(rh::posterior(t, hps, hcfg, in[0])); };
        w_kl = std::max(w_kl, max_gradient_error(headed, {g}));
    }
    v.need(w_kl < 1e-4, "l_kl max rel err " + num(w_kl));

    const enc::EncoderConfig ecfg{3, 8, 6, 8};
    auto eps = enc::init_encoder(ecfg, 21);
    for (const auto& n : eps.names()) eps.set_trainable(n, false);
    double w_perc = 0, w_ste = 0;
    for (int trial = 0; trial < trials; ++trial) {
        const auto& m = mols[trial % mols.size()];
        dm::Array coords = m.coords;
        for (auto& x : coords.data()) x += 0.1 * rng.normal();
        const auto logits = random_array(dm::Shape{4, 6}, rng);
        const auto wl = random_array(dm::Shape{3}, rng, 0.5);
        const double time = rng.uniform();
        // the clean target is a stop-gradient under the same pooling logits, so
        // finite differences only apply with the logits held fixed
        auto build = [&](dm::Tape& t, const std::vector<dm::Var>& in) {
            return ob::perceptual_loss(t, eps, ecfg, t.constant(wl), m, in[0], t.constant(logits), time, {});
        };
        w_perc = std::max(w_perc, max_gradient_error(build, {coords}));

        // straight-through path: d/d logits equals d/d (continuous one-hot input)
        dm::Tape t;
        auto lv = t.variable(logits);
        t.backward(ob::perceptual_loss(t, eps, ecfg, t.constant(wl), m, t.constant(coords), lv, time, {}));
        const auto g_logits = t.grad(lv);
        const auto clean = enc::encode(m, eps, ecfg).graph_feats;
        auto relaxed = [&](const dm::Array& x) {
            dm::Tape u(dm::GradMode::Disabled);
            auto e = enc::encode(u, eps, ecfg, u.constant(coords), u.constant(x), m);
            auto w = u.constant(wl);
            std::vector<dm::Var> cv;
            for (const auto& gf : clean) cv.push_back(u.constant(gf));
            auto diff = dm::sub(rh::pool_layers(cv, w), rh::pool_layers(e.graph_feats, w));
            return dm::sum(dm::square(diff)).value().item() * ob::cosine_weight(time, 0.1, 1.0);
        };
        dm::Array x = ob::argmax_onehot(logits);
        for (std::size_t k = 0; k < x.size(); ++k) {
            const double x0 = x[k];
            x[k] = x0 + 1e-5;
            const double fp = relaxed(x);
            x[k] = x0 - 1e-5;
            const double fm = relaxed(x);
            x[k] = x0;
            w_ste = std::max(w_ste, relative_error(g_logits[k], (fp - fm) / 2e-5));
        }
    }
    v.need(w_perc < 1e-4, "l_perc max rel err " + num(w_perc));
    v.need(w_ste < 1e-4, "l_perc straight-through path max rel err " + num(w_ste));

    auto proj = ob::init_projection(8, 8, 7);
    double w_repa = 0;
    for (int trial = 0; trial < trials; ++trial) {
        const auto gfeat = random_array(dm::Shape{4, 8}, rng);
        const auto target = random_array(dm::Shape{4, 8}, rng);
        std::vector<bool> mask(4, true);
        if (trial % 2) mask[trial % 4] = false;
        auto build = [&](dm::Tape& t, const std::vector<dm::Var>& in) { return ob::repa_loss(t, proj, in[0], target, mask); };
        w_repa = std::max(w_repa, max_gradient_error(build, {gfeat}));
    }
    v.need(w_repa < 1e-4, "l_repa max rel err " + num(w_repa));
    const double secs = seconds_since(t0);
    v.need(secs < 120, "runtime " + num(secs) + " s < 120 s");
    return v;
}

Verdict straight_through(const Env&) {
    Verdict v;
    Rng rng(derive_seed(3, "accept-ste"));
    bool forward_ok = true, backward_ok = true;
    for (int trial = 0; trial < 200; ++trial) {
        const auto n = static_cast<std::size_t>(rng.uniform_int(1, 8));
        const auto c = static_cast<std::size_t>(rng.uniform_int(2, 8));
        auto logits = random_array(dm::Shape{n, c}, rng);
        if (trial % 10 == 0) logits.at(0, c - 1) = logits.at(0, 0) = 5.0;  // tie goes to the lowest index
        dm::Array expect(dm::Shape{n, c});
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            for (std::size_t k = 1; k < c; ++k)
                if (logits.at(i, k) > logits.at(i, best)) best = k;
            expect.at(i, best) = 1.0;
        }
        {
            dm::Tape t;
            if (!std::ranges::equal(ob::straight_through_onehot(t.constant(logits)).value().data(), expect.data())) forward_ok = false;
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < c; ++k) {
                dm::Array unit(dm::Shape{n, c});
                unit.at(i, k) = 1.0;
                dm::Tape t;
                auto lv = t.variable(logits);
                t.backward(dm::sum(dm::mul(ob::straight_through_onehot(lv), t.constant(unit))));
                if (!std::ranges::equal(t.grad(lv).data(), unit.data())) backward_ok = false;
            }
        }
    }
    v.need(forward_ok, "forward equals the row-wise argmax one-hot exactly (200 matrices, ties to lowest index)");
    v.need(backward_ok, "backward Jacobian equals the identity exactly (unit perturbations)");
    return v;
}

Verdict cosine_weight(const Env&) {
    Verdict v;
    const std::vector<std::pair<double, double>> pairs{{0.1, 1.0}, {0.0, 1.0}, {0.3, 0.7}, {0.05, 2.5}, {0.5, 0.5}};
    bool ends = true, monotone = true;
    for (const auto& [lo, hi] : pairs) {
        if (ob::cosine_weight(0.0, lo, hi) != hi || ob::cosine_weight(1.0, lo, hi) != lo) ends = false;
        double prev = ob::cosine_weight(0.0, lo, hi);
        for (int k = 1; k <= 1000; ++k) {
            const double w = ob::cosine_weight(k / 1000.0, lo, hi);
            if (w > prev) monotone = false;
            prev = w;
        }
    }
    v.need(ends, "w(0) = w_max and w(1) = w_min exactly");
    v.need(monotone, "nonincreasing on the 1001-point grid");
    return v;
}

Verdict metric_oracles(const Env&) {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(derive_seed(5, "accept-metrics"));
    v.need(dg::spectral_effective_rank({0.5, 0.5}) == 2.0, "effective rank of p = [0.5, 0.5] is exactly 2");
    {
        dm::Array z(dm::Shape{60, 7});
        const auto dir = random_array(dm::Shape{7}, rng);
        for (std::size_t i = 0; i < 60; ++i) {
            const double s = rng.normal();
            for (std::size_t k = 0; k < 7; ++k) z.at(i, k) = 2.0 + s * dir[k];
        }
        const double er = dg::effective_rank(z);
        v.need(std::abs(er - 1.0) < 1e-6, "rank-1 data effective rank " + num(er));
    }

    const auto data = mk::synthesize_dataset({60, 8, 6, 9});
    std::vector<mk::Molecule> same;
    for (const auto& m : data.molecules)
        if (m.size() == 8) same.push_back(m);
    if (same.size() < 5) throw repcond::Error("too few 8-atom molecules for the Lipschitz oracle");
    auto flat = [](const mk::Molecule& m) {
        dm::Array out(dm::Shape{m.coords.size()});
        for (std::size_t i = 0; i < m.coords.size(); ++i) out[i] = m.coords[i];
        return out;
    };
    double worst_c = 0;
    for (double c : {3.0, -2.0, 0.5, 1.0}) {
        auto f = [&](const mk::Molecule& m) {
            auto a = flat(m);
            for (auto& x : a.data()) x *= c;
            return a;
        };
        const auto r = dg::empirical_lipschitz(f, same, 1e-3, 100, 11);
        worst_c = std::max({worst_c, std::abs(r.mean - std::abs(c)), std::abs(r.max - std::abs(c))});
    }
    v.need(worst_c < 1e-6, "c * identity gives |c| (max gap " + num(worst_c) + ")");

    double worst_excess = -1e300;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t in = same[0].coords.size(), out = 5;
        const auto a = random_array(dm::Shape{out, in}, rng);
        Eigen::MatrixXd m(out, in);
        for (std::size_t i = 0; i < out; ++i)
            for (std::size_t k = 0; k < in; ++k) m(i, k) = a.at(i, k);
        const double smax = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
        auto f = [&](const mk::Molecule& mol) {
            const auto x = flat(mol);
            dm::Array y(dm::Shape{out});
            for (std::size_t i = 0; i < out; ++i)
                for (std::size_t k = 0; k < in; ++k) y[i] += a.at(i, k) * x[k];
            return y;
        };
        const auto r = dg::empirical_lipschitz(f, same, 1e-3, 100, 100 + trial);
        worst_excess = std::max(worst_excess, r.max - smax);
    }
    v.need(worst_excess <= 1e-9, "random linear maps stay below sigma_max + 1e-9 (max excess " + num(worst_excess) + ")");

    double worst_pair = 0, worst_knn = 0;
    for (int trial = 0; trial < 10; ++trial) {
        const auto n = static_cast<std::size_t>(rng.uniform_int(3, 50));
        const auto z = random_array(dm::Shape{n, 6}, rng, 1.0 + trial);
        std::vector<long double> dist;
        std::vector<std::vector<long double>> full(n, std::vector<long double>(n, 0));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                long double s = 0;
                for (std::size_t k = 0; k < 6; ++k) {
                    const long double d = static_cast<long double>(z.at(i, k)) - z.at(j, k);
                    s += d * d;
                }
                full[i][j] = std::sqrt(s);
                if (i < j) dist.push_back(full[i][j]);
            }
        long double mean = 0;
        for (auto d : dist) mean += d;
        mean /= dist.size();
        long double var = 0;
        for (auto d : dist) var += (d - mean) * (d - mean);
        const long double sd = std::sqrt(var / dist.size());
        std::sort(dist.begin(), dist.end());
        auto pct = [&](long double q) {
            const long double pos = q * (dist.size() - 1);
            const auto lo = static_cast<std::size_t>(std::floor(pos));
            const std::size_t hi = std::min(lo + 1, dist.size() - 1);
            return dist[lo] + (pos - lo) * (dist[hi] - dist[lo]);
        };
        const auto ps = dg::pairwise_stats(z);
        for (auto [got, want] : {std::pair<double, long double>{ps.mean, mean}, {ps.std, sd}, {ps.median, pct(0.5L)},
                                 {ps.p10, pct(0.1L)}, {ps.p90, pct(0.9L)}})
            worst_pair = std::max(worst_pair, static_cast<double>(std::abs(got - want)));
        const int k = static_cast<int>(rng.uniform_int(1, static_cast<std::int64_t>(n) - 1));
        long double knn = 0;
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<long double> row;
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) row.push_back(full[i][j]);
            std::sort(row.begin(), row.end());
            long double s = 0;
            for (int q = 0; q < k; ++q) s += row[q];
            knn += s / k;
        }
        knn /= n;
        worst_knn = std::max(worst_knn, static_cast<double>(std::abs(dg::knn_smoothness(z, k) - knn)));
    }
    v.need(worst_pair < 1e-9, "pairwise stats vs brute force max gap " + num(worst_pair));
    v.need(worst_knn < 1e-9, "k-NN average vs brute force max gap " + num(worst_knn));
    const double secs = seconds_since(t0);
    v.need(secs < 60, "runtime " + num(secs) + " s < 60 s");
    return v;
}

mk::Mat3 random_orthogonal(Rng& rng, std::uint64_t seed) {
    mk::Mat3 r = mk::random_rotation(seed);
    if (rng.bernoulli(0.5))
        for (auto& x : r[0]) x = -x;  // reflection
    return r;
}

Verdict equivariance(const Env&) {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(derive_seed(6, "accept-equiv"));
    const auto data = mk::synthesize_dataset({200, 16, 6, 13});

    const enc::EncoderConfig ecfg;
    auto eps = enc::init_encoder(ecfg, 3);
    double w_enc = 0;
    std::vector<enc::LayerStack> base;
    for (const auto& m : data.molecules) base.push_back(enc::encode(m, eps, ecfg));
    for (int motion = 0; motion < 1000; ++motion) {
        const std::size_t idx = static_cast<std::size_t>(motion) % data.molecules.size();
        const auto r = random_orthogonal(rng, derive_seed(6, "motion", motion));
        const std::array<double, 3> shift{5 * rng.normal(), 5 * rng.normal(), 5 * rng.normal()};
        const auto moved = enc::encode(mk::rigid_transform(data.molecules[idx], r, shift), eps, ecfg);
        for (std::size_t l = 0; l < moved.graph_feats.size(); ++l)
            w_enc = std::max(w_enc, max_abs_diff(moved.graph_feats[l], base[idx].graph_feats[l]));
    }
    v.need(w_enc < 1e-9, "encoder graph features E(3)-invariant over 1000 motions (max " + num(w_enc) + ")");

    const gen::GenConfig gcfg;
    auto gps = gen::init_generator(gcfg, 4);
    double w_x = 0, w_l = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto& m = data.molecules[static_cast<std::size_t>(trial)];
        const auto st = gen::corrupt(m, gcfg, trial % gcfg.steps, derive_seed(6, "corrupt", trial));
        const auto z = random_array(dm::Shape{static_cast<std::size_t>(gcfg.latent_dim)}, rng);
        const auto r = random_orthogonal(rng, derive_seed(6, "gen-motion", trial));
        auto run = [&](const dm::Array& x) {
            dm::Tape t(dm::GradMode::Disabled);
            auto p = gen::denoise(t, gps, gcfg, t.constant(x), t.constant(st.atom_logits), st.t_index, t.constant(z),
                                  st.mask, 2);
            return std::pair{p.coords.value(), p.logits.value()};
        };
        const auto [x0, l0] = run(st.coords);
        const auto [x1, l1] = run(mk::rotate(st.coords, r));
        w_x = std::max(w_x, max_abs_diff(x1, mk::rotate(x0, r)));
        w_l = std::max(w_l, max_abs_diff(l1, l0));
    }
    v.need(w_x < 1e-9 && w_l < 1e-9,
           "denoise rotation-equivariant (coords " + num(w_x) + ", logits " + num(w_l) + ")");

    double w_chain = 0, w_com = 0;
    for (int trial = 0; trial < 4; ++trial) {
        const auto z = random_array(dm::Shape{static_cast<std::size_t>(gcfg.latent_dim)}, rng);
        const std::size_t atoms = 6 + 3 * static_cast<std::size_t>(trial);
        gen::SampleOptions watch;
        watch.on_step = [&](int, const dm::Array& x) {
            const auto c = mk::center_of_mass(x, std::vector<bool>(x.rows(), true));
            w_com = std::max({w_com, std::abs(c[0]), std::abs(c[1]), std::abs(c[2])});
        };
        const auto a = gen::sample(z, atoms, gps, gcfg, 50 + trial, watch);
        gen::SampleOptions rot;
        rot.noise_rotation = mk::random_rotation(derive_seed(6, "chain", trial));
        const auto b = gen::sample(z, atoms, gps, gcfg, 50 + trial, rot);
        w_chain = std::max(w_chain, max_abs_diff(b.coords, mk::rotate(a.coords, *rot.noise_rotation)));
        if (a.atoms != b.atoms) w_chain = std::max(w_chain, 1.0);
    }
    v.need(w_chain < 1e-6, "sample chain equivariant (max " + num(w_chain) + ")");
    v.need(w_com < 1e-9, "zero CoM at every reverse step (max " + num(w_com) + ")");
    const double secs = seconds_since(t0);
    v.need(secs < 120, "runtime " + num(secs) + " s < 120 s");
    return v;
}

Verdict baseline_recovery(const Env& env) {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    rp::RunConfig c;
    c.out = (env.work / "baseline").string();
    fs::remove_all(c.out);
    c.pretrain.epochs = 2;
    c.train.max_steps = 200;
    c.train.checkpoint_every = 0;
    c.train.bypass_head = true;
    c.loss.lambda_kl = c.loss.lambda_perc = c.loss.lambda_repa = 0;
    rp::synth_data(c);
    rp::pretrain_encoder(c);
    const auto refined = rp::phase1_train(c);
    const auto plain = rp::baseline_train(c);
    v.need(refined.trace.size() == 200 && plain.trace.size() == 200, "both traces have 200 steps");
    double worst = 0;
    bool total_is_gen = true;
    for (std::size_t i = 0; i < std::min(refined.trace.size(), plain.trace.size()); ++i) {
        worst = std::max(worst, std::abs(refined.trace[i].gen - plain.trace[i].gen));
        if (refined.trace[i].total != refined.trace[i].gen) total_is_gen = false;
    }
    v.need(worst <= 1e-9, "per-step l_gen gap " + num(worst) + " <= 1e-9");
    v.need(total_is_gen, "total equals l_gen at every step");
    const double secs = seconds_since(t0);
    v.need(secs < 300, "runtime " + num(secs) + " s < 300 s");
    return v;
}

// ---------------------------------------------------------------------------
// end-to-end runs

rp::RunConfig toy_config(const Env& env, std::uint64_t seed, const std::string& name) {
    rp::RunConfig c;
    c.seed = seed;
    c.out = (env.work / name).string();
    return c;
}

bool reusable(const rp::RunConfig& c, const std::vector<std::string>& phases) {
    const fs::path dir = c.out_dir();
    if (!fs::exists(dir / "manifest.json")) return false;
    try {
        const auto m = rp::Manifest::open(dir);
        if (m.json().value("config", nlohmann::json()) != rp::to_json(c)) return false;
        for (const auto& p : phases)
            if (!m.has_phase(p)) return false;
        m.verify("pretrain-encoder", dir / rp::files::kEncoder);
        if (m.has_phase("train")) m.verify("train", dir / rp::files::kPhase1);
        if (m.has_phase("train-rdm")) m.verify("train-rdm", dir / rp::files::kRdm);
        return true;
    } catch (const repcond::Error&) {
        return false;
    }
}

const std::vector<std::string> kFullPhases{"synth-data", "pretrain-encoder", "train", "train-rdm", "sample", "diagnose"};

nlohmann::json full_run(const rp::RunConfig& c) {
    if (!reusable(c, kFullPhases)) {
        std::cerr << "running " << c.out << '\n';
        fs::remove_all(c.out);
        rp::synth_data(c);
        rp::pretrain_encoder(c);
        rp::phase1_train(c);
        rp::phase2_train(c);
        rp::phase3_sample(c);
        rp::diagnose(c);
        rp::report(c);
    } else {
        std::cerr << "reusing " << c.out << '\n';
    }
    return rp::Manifest::open(c.out_dir()).json();
}

bool csv_finite(const fs::path& p) {
    std::ifstream is(p);
    std::string line;
    std::getline(is, line);
    std::size_t rows = 0;
    while (std::getline(is, line)) {
        ++rows;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            if (cell.empty()) continue;
            if (!std::isfinite(std::stod(cell))) return false;
        }
    }
    return rows > 0;
}

constexpr std::array<std::uint64_t, 3> kSeeds{0, 1, 2};

Verdict end_to_end(const Env& env) {
    Verdict v;
    double ratio_sum = 0;
    for (auto seed : kSeeds) {
        const auto c = toy_config(env, seed, "full" + std::to_string(seed));
        const auto m = full_run(c);
        const auto& ph = m["phases"];
        double secs = 0;
        for (const auto& [name, rec] : ph.items()) secs += rec.value("wall_seconds", 0.0);
        const double init = ph["train"]["initial_l_gen"], fin = ph["train"]["final_l_gen"];
        ratio_sum += fin / init;
        const fs::path dir = c.out_dir();
        const bool finite = csv_finite(dir / rp::files::kPhase1Loss) && csv_finite(dir / rp::files::kRdmLoss) &&
                            std::isfinite(ph["pretrain-encoder"].value("final_loss", NAN));
        const std::string tag = "seed " + std::to_string(seed) + ": ";
        v.need(ph["train"]["steps"] == 1500 && ph["train-rdm"].contains("final_loss") && ph["sample"]["n"] == 500,
               tag + "30 Phase I epochs, Phase II, 500 samples");
        v.need(finite, tag + "all losses finite");
        v.need(secs < 45 * 60, tag + "wall " + num(secs / 60) + " min < 45 min");
        v.note(tag + "l_gen " + num(init) + " -> " + num(fin));
    }
    const double mean_ratio = ratio_sum / kSeeds.size();
    v.need(mean_ratio < 0.5, "mean final/initial l_gen " + num(mean_ratio) + " < 0.5");
    return v;
}

Verdict geometry_direction(const Env& env) {
    Verdict v;
    for (auto seed : kSeeds) {
        const auto c = toy_config(env, seed, "full" + std::to_string(seed));
        const auto m = full_run(c);
        const auto& d = m["phases"]["diagnose"];
        const double lh = d["head"]["lipschitz_mean"], lr = d["raw"]["lipschitz_mean"];
        const double eh = d["head"]["effective_rank"], er = d["raw"]["effective_rank"];
        const double ph = d["head"]["pairwise_mean"], pr = d["raw"]["pairwise_mean"];
        const std::string tag = "seed " + std::to_string(seed) + ": ";
        v.need(lh < lr, tag + "head lipschitz_mean " + num(lh) + " < raw " + num(lr));
        v.need(eh >= 0.9 * er, tag + "head effective_rank " + num(eh) + " >= 0.9 x raw " + num(er));
        v.note(tag + "per unit of spread (lipschitz_mean / pairwise_mean): head " + num(lh / ph) + ", raw " + num(lr / pr));
    }
    return v;
}

Verdict probe_protocol(const Env& env) {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    rp::RunConfig c;
    c.out = (env.work / "probe").string();
    fs::remove_all(c.out);
    rp::synth_data(c);
    rp::pretrain_encoder(c);
    const auto res = rp::probe(c);
    double best_local = 0;
    for (std::size_t k = 0; k < res.motifs.size(); ++k)
        if (res.motifs[k] == "hydroxyl" || res.motifs[k] == "amine") best_local = std::max(best_local, res.accuracy[0][k]);
    v.need(best_local >= 0.8, "best layer-0 local-motif balanced accuracy " + num(best_local) + " >= 0.8");

    // chance oracle: same layer-0 features, coin-flip labels
    const auto data = mk::load_dataset(c.dataset_path());
    auto eps = dm::ParamStore::load(c.out_dir() / rp::files::kEncoder);
    std::vector<enc::LayerStack> stacks;
    for (const auto& m : data.molecules) stacks.push_back(enc::encode(m, eps, c.encoder));
    const auto x0 = dg::layer_matrix(stacks, 0);
    Rng rng(derive_seed(10, "coin"));
    std::vector<bool> coin(x0.rows());
    for (std::size_t i = 0; i < coin.size(); ++i) coin[i] = rng.bernoulli(0.5);
    const double chance = dg::linear_probe(x0, coin, c.diag.probe).balanced_accuracy;
    v.need(chance >= 0.4 && chance <= 0.6, "coin-flip labels give " + num(chance) + " in [0.4, 0.6]");

    std::ifstream is(c.out_dir() / rp::files::kProbe);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(is, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    const std::size_t layers = static_cast<std::size_t>(c.encoder.layers);
    bool schema = rows.size() == layers + 2 && !rows[0].empty() && rows[0][0] == "layer" &&
                  rows[0].size() == res.motifs.size() + 1;
    for (std::size_t k = 0; schema && k < res.motifs.size(); ++k) schema = rows[0][k + 1] == res.motifs[k];
    for (std::size_t l = 0; schema && l < layers; ++l) schema = rows[l + 1].size() == rows[0].size() && rows[l + 1][0] == "L" + std::to_string(l);
    if (schema) {
        const auto& delta = rows.back();
        schema = delta.size() == rows[0].size() && delta[0] == "L0-L" + std::to_string(layers - 1);
        for (std::size_t k = 1; schema && k < delta.size(); ++k) {
            const double d = std::stod(delta[k]), a = std::stod(rows[1][k]), b = std::stod(rows[layers][k]);
            if (std::isfinite(a) && std::isfinite(b)) schema = std::abs(d - (a - b)) <= 2e-6;
        }
    }
    v.need(schema, "probe CSV is a layers x motifs grid plus an L0-Llast delta row");
    const double secs = seconds_since(t0);
    v.need(secs < 300, "runtime " + num(secs) + " s < 300 s");
    return v;
}

Verdict collapse_detector(const Env& env) {
    Verdict v;
    auto c = toy_config(env, 0, "kl1e-4");
    c.loss.lambda_kl = 1e-4;
    const fs::path outcome_file = c.out_dir() / "collapse_outcome.json";
    nlohmann::json outcome;
    if (fs::exists(outcome_file) && reusable(c, {"synth-data", "pretrain-encoder"})) {
        outcome = nlohmann::json::parse(slurp(outcome_file));
        if (outcome.value("config", nlohmann::json()) != rp::to_json(c)) outcome = nullptr;
    }
    if (outcome.is_null()) {
        std::cerr << "running " << c.out << '\n';
        fs::remove_all(c.out);
        rp::synth_data(c);
        rp::pretrain_encoder(c);
        outcome = {{"config", rp::to_json(c)}};
        try {
            rp::phase1_train(c);
            const auto r = rp::phase2_train(c);
            outcome["collapse_warning"] = r.collapse_warning;
            outcome["min_latent_std"] = r.min_latent_std;
        } catch (const repcond::NumericError& e) {
            outcome["numeric_error"] = e.what();
        }
        spit(outcome_file, outcome.dump(2));
    } else {
        std::cerr << "reusing " << c.out << '\n';
    }
    if (outcome.contains("numeric_error")) {
        const std::string msg = outcome["numeric_error"];
        v.need(msg.find("l_gen") != std::string::npos && msg.find("l_kl") != std::string::npos,
               "NaN abort names the loss components: " + msg);
    } else {
        const bool warned = outcome.value("collapse_warning", false);
        v.need(warned, "posterior-collapse warning raised (min per-dim mu std " +
                           num(outcome.value("min_latent_std", NAN)) + ", threshold 1e-6) or a NaN abort");
    }
    return v;
}

struct Command {
    int code = 0;
    std::string output;
};

Command run_cli(const Env& env, const std::string& args) {
    const std::string cmd = "'" + env.cli.string() + "' " + args + " 2>&1";
    Command out;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) throw repcond::Error("cannot start " + cmd);
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), buf.size(), pipe)) out.output += buf.data();
    const int status = pclose(pipe);
    out.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return out;
}

bool same_bits(const dm::Array& a, const dm::Array& b) {
    return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

Verdict format_round_trips(const Env& env) {
    Verdict v;
    const fs::path dir = env.work / "formats";
    fs::remove_all(dir);
    fs::create_directories(dir);

    const auto d = mk::synthesize_dataset({300, 16, 6, 12});
    mk::save_dataset(d, dir / "a.jsonl");
    const auto back = mk::load_dataset(dir / "a.jsonl");
    mk::save_dataset(back, dir / "b.jsonl");
    v.need(back == d && slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"), "dataset JSON lines round trip bit-exactly");

    Rng rng(derive_seed(12, "formats"));
    auto z = random_array(dm::Shape{37, 9}, rng, 1e3);
    z[0] = -0.0;
    z[1] = 4.9e-324;
    z[2] = 1.7976931348623157e308;
    z[3] = 0.1;
    dg::write_repm(dir / "z.repm", z);
    const auto zb = dg::read_repm(dir / "z.repm");
    dg::write_repm(dir / "z2.repm", zb);
    v.need(same_bits(z, zb) && slurp(dir / "z.repm") == slurp(dir / "z2.repm"), "REPM1 round trips bit-exactly");

    dm::ParamStore ps;
    ps.add("b.weight", random_array(dm::Shape{3, 4}, rng));
    ps.add("a.bias", random_array(dm::Shape{4}, rng), false);
    ps.add("c.scalar", dm::Array::scalar(-0.0));
    ps.add("d.wide", random_array(dm::Shape{2, 7}, rng));
    ps.save(dir / "p.ckpt");
    const auto pb = dm::ParamStore::load(dir / "p.ckpt");
    pb.save(dir / "p2.ckpt");
    const std::string bytes = slurp(dir / "p.ckpt");
    bool bits = pb == ps;
    for (const auto& n : ps.names()) bits = bits && same_bits(ps.value(n), pb.value(n));
    v.need(bits && bytes == slurp(dir / "p2.ckpt") && bytes.rfind("LNSCKPT1", 0) == 0,
           "LNSCKPT1 checkpoints round trip bit-exactly");

    // corrupted magic through the CLI
    rp::RunConfig c;
    c.out = (dir / "run").string();
    c.data.count = 150;
    c.data.max_atoms = 8;
    c.encoder.layers = 2;
    c.encoder.dim = 8;
    c.encoder.message_hidden = 8;
    c.pretrain.epochs = 1;
    c.head.latent_dim = 4;
    c.generator = {2, 8, 10, 6, 4};
    c.train.epochs = 1;
    c.train.batch_size = 8;
    c.train.max_steps = 2;
    c.train.checkpoint_every = 0;
    c.train.eval_molecules = 8;
    c.rdm.steps = 10;
    c.rdm.hidden = {16};
    c.rdm.embed_dim = 8;
    c.rdm.max_atom_count = 16;
    c.rdm_train.epochs = 1;
    c.sample.n = 2;
    c.sample.steps = {10};
    rp::synth_data(c);
    rp::pretrain_encoder(c);
    rp::phase1_train(c);
    rp::phase2_train(c);
    const std::string cfg_arg = "-q -c '" + (fs::path(c.out) / "manifest.json").string() + "' -o '" + c.out + "'";
    const Command ok = run_cli(env, cfg_arg + " sample");
    v.need(ok.code == 0, "intact run samples through the CLI (exit " + std::to_string(ok.code) + ")");

    for (const auto& [file, sub] : {std::pair<std::string, std::string>{rp::files::kRdm, "sample"},
                                    {rp::files::kEncoder, "train"}}) {
        const fs::path p = fs::path(c.out) / file;
        std::string raw = slurp(p);
        const std::string keep = raw;
        raw[0] = 'X';
        spit(p, raw);
        const Command bad = run_cli(env, cfg_arg + " " + sub);
        spit(p, keep);
        const bool named = bad.output.find("CheckpointError") != std::string::npos &&
                           bad.output.find("magic") != std::string::npos;
        v.need(bad.code == 4 && named, "corrupted " + file + " magic: exit " + std::to_string(bad.code) +
                                           (named ? ", CheckpointError named" : ", error not named"));
    }
    return v;
}

struct Criterion {
    int id;
    const char* title;
    std::function<Verdict(const Env&)> run;
};

} // namespace

int main(int argc, char** argv) {
    repcond::diffmath::retain_heap();
    CLI::App app{"acceptance checks"};
    Env env;
    env.work = "acceptance_work";
    env.cli = REPCOND_CLI_PATH;
    std::vector<int> only;
    app.add_option("--work", env.work, "scratch directory; end-to-end runs are cached here");
    app.add_option("--cli", env.cli, "repcond executable");
    app.add_option("--only", only, "criterion numbers to run (default all)")->delimiter(',');
    CLI11_PARSE(app, argc, argv);
    // cached runs are keyed on their config, which records the output path
    fs::create_directories(env.work);
    env.work = fs::canonical(env.work);

    const std::vector<Criterion> all{
        {1, "KL closed form", kl_closed_form},
        {2, "gradient integrity", gradient_integrity},
        {3, "straight-through contract", straight_through},
        {4, "cosine weight", cosine_weight},
        {5, "metric oracles", metric_oracles},
        {6, "equivariance suite", equivariance},
        {7, "baseline recovery", baseline_recovery},
        {8, "end-to-end toy run", end_to_end},
        {9, "representation geometry direction", geometry_direction},
        {10, "probe protocol", probe_protocol},
        {11, "collapse detector", collapse_detector},
        {12, "format round trips", format_round_trips},
    };
    const std::set<int> wanted(only.begin(), only.end());
    int failed = 0;
    for (const auto& c : all) {
        if (!wanted.empty() && !wanted.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.run(env);
        } catch (const std::exception& e) {
            v.pass = false;
            v.notes.push_back(std::string("exception: ") + e.what());
        }
        if (!v.pass) ++failed;
        std::string detail;
        for (const auto& n : v.notes) detail += (detail.empty() ? "" : "; ") + n;
        std::printf("criterion %2d %s  %s (%.1f s): %s\n", c.id, v.pass ? "PASS" : "FAIL", c.title,
                    seconds_since(t0), detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
