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

#include "repcond/generator/generator.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "repcond/diffmath/nn.hpp"
#include "repcond/diffmath/ops.hpp"
#include "repcond/errors.hpp"
#include "repcond/rng.hpp"

namespace repcond::generator {

namespace dm = diffmath;

namespace {

constexpr std::size_t kTimeFeatures = 5;

std::string block_prefix(int l) { return "gen.b" + std::to_string(l); }

Array time_features(double tau) {
    const double pi = std::numbers::pi;
    return Array::vector({tau, std::sin(pi * tau), std::cos(pi * tau), std::sin(2 * pi * tau), std::cos(2 * pi * tau)});
}

Array mask_column(const std::vector<bool>& mask) {
    Array c(dm::Shape{mask.size(), 1});
    for (std::size_t i = 0; i < mask.size(); ++i) c[i] = mask[i] ? 1.0 : 0.0;
    return c;
}

std::size_t count_valid(const std::vector<bool>& mask) {
    std::size_t n = 0;
    for (bool b : mask) n += b;
    return n;
}

// Gaussian draws with the zero-CoM projection over valid rows and an
// optional rotation of every row. Masked rows stay zero.
Array coordinate_noise(Rng& rng, const std::vector<bool>& mask, const std::optional<molkit::Mat3>& rot) {
    const std::size_t n = mask.size();
    Array eps(dm::Shape{n, 3});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < 3; ++k) eps.at(i, k) = rng.normal();
    if (rot) eps = molkit::rotate(eps, *rot);
    for (std::size_t i = 0; i < n; ++i)
        if (!mask[i])
            for (std::size_t k = 0; k < 3; ++k) eps.at(i, k) = 0.0;
    molkit::remove_center_of_mass(eps, mask);
    return eps;
}

Array gaussian(Rng& rng, std::size_t rows, std::size_t cols) {
    Array a(dm::Shape{rows, cols});
    for (auto& v : a.data()) v = rng.normal();
    return a;
}

} // namespace

void validate(const GenConfig& cfg) {
    if (cfg.depth < 2) throw ParameterError("generator depth must be >= 2, got " + std::to_string(cfg.depth));
    if (cfg.steps < 10) throw ParameterError("diffusion steps must be >= 10, got " + std::to_string(cfg.steps));
    if (cfg.dim < 1 || cfg.vocab < 1 || cfg.latent_dim < 1) throw ParameterError("generator widths must be positive");
}

NoisyState corrupt(const Molecule& m, const GenConfig& cfg, int t_index, std::uint64_t seed) {
    const dm::CosineSchedule sched(cfg.steps);
    const double ab = sched.alpha_bar(t_index);
    const double a = std::sqrt(ab), s = std::sqrt(1.0 - ab);
    Rng rng(seed);
    NoisyState st;
    st.t_index = t_index;
    st.mask = m.mask;
    const Array eps = coordinate_noise(rng, m.mask, std::nullopt);
    st.coords = m.coords;
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t k = 0; k < 3; ++k) st.coords.at(i, k) = a * m.coords.at(i, k) + s * eps.at(i, k);
    molkit::remove_center_of_mass(st.coords, m.mask);
    st.atom_logits = molkit::one_hot(m, cfg.vocab);
    for (auto& v : st.atom_logits.data()) v = a * v + s * rng.normal();
    return st;
}

ParamStore init_generator(const GenConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    Rng rng(derive_seed(seed, "generator-init"));
    const auto d = static_cast<std::size_t>(cfg.dim);
    const auto a = static_cast<std::size_t>(cfg.vocab);
    ParamStore ps;
    const double third = std::sqrt(1.0 / 3.0);
    ps.add("gen.in.wa", dm::init_weight(a, d, rng, third));
    ps.add("gen.in.wz", dm::init_weight(static_cast<std::size_t>(cfg.latent_dim), d, rng, third));
    ps.add("gen.in.wt", dm::init_weight(kTimeFeatures, d, rng, third));
    ps.add("gen.in.b", Array(dm::Shape{d}));
    for (int l = 0; l < cfg.depth; ++l) {
        const auto p = block_prefix(l);
        dm::add_pair_mlp(ps, p + ".msg", d, d, d, rng);
        ps.add(p + ".x.w", dm::init_weight(d, 1, rng, 0.1));
        dm::add_linear(ps, p + ".upd", d, d, rng);
    }
    dm::add_linear(ps, "gen.out", d, a, rng);
    return ps;
}

Var remove_com(Var coords, const std::vector<bool>& mask) {
    Tape& t = *coords.tape;
    Var mean = dm::reshape(dm::masked_mean_rows(coords, mask), dm::Shape{1, 3});
    return dm::sub(coords, dm::matmul(t.constant(mask_column(mask)), mean));
}

Prediction denoise(Tape& t, ParamStore& params, const GenConfig& cfg, Var coords_t, Var logits_t, int t_index,
                   Var z, const std::vector<bool>& mask, int tap_layer) {
    const std::size_t n = mask.size();
    if (coords_t.value().rows() != n || coords_t.value().cols() != 3 || logits_t.value().rows() != n ||
        logits_t.value().cols() != static_cast<std::size_t>(cfg.vocab)) {
        throw DimensionError("generator state " + dm::shape_string(coords_t.shape()) + " / " +
                             dm::shape_string(logits_t.shape()) + " does not match " + std::to_string(n) + " atoms");
    }
    if (z.value().size() != static_cast<std::size_t>(cfg.latent_dim)) {
        throw DimensionError("latent has " + std::to_string(z.value().size()) + " entries, generator expects " +
                             std::to_string(cfg.latent_dim));
    }
    if (tap_layer < 1 || tap_layer > cfg.depth) throw ParameterError("generator tap layer outside [1, depth]");
    const dm::CosineSchedule sched(cfg.steps);
    const double tau = sched.time(t_index);

    std::vector<std::size_t> src, dst;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j && mask[i] && mask[j]) {
                src.push_back(i);
                dst.push_back(j);
            }
    const std::size_t nv = count_valid(mask);
    const double inv_deg = nv > 1 ? 1.0 / static_cast<double>(nv - 1) : 0.0;

    Var cond = dm::add(dm::add(dm::matmul(z, t.param(params, "gen.in.wz")),
                               dm::matmul(t.constant(time_features(tau)), t.param(params, "gen.in.wt"))),
                       t.param(params, "gen.in.b"));
    Var h = dm::add_row(dm::matmul(logits_t, t.param(params, "gen.in.wa")), cond);
    Var x = coords_t;
    Prediction out;
    for (int l = 0; l < cfg.depth; ++l) {
        const auto p = block_prefix(l);
        if (!src.empty()) {
            Var diff = dm::sub(dm::gather_rows(x, src), dm::gather_rows(x, dst));
            Var d2 = dm::row_sums(dm::square(diff));
            Var m = dm::tanh(dm::pair_mlp(t, params, p + ".msg", h, src, dst, d2));
            Var gate = dm::div(dm::matmul(m, t.param(params, p + ".x.w")), dm::add_scalar(dm::sqrt(d2), 1.0));
            x = dm::add(x, dm::scale(dm::scatter_add_rows(dm::mul_col(diff, gate), src, n), inv_deg));
            Var agg = dm::scale(dm::scatter_add_rows(m, src, n), inv_deg);
            h = dm::add(h, dm::tanh(dm::linear(t, params, p + ".upd", agg)));
        }
        if (l + 1 == tap_layer) out.tap = h;
    }
    out.coords = remove_com(x, mask);
    out.logits = dm::linear(t, params, "gen.out", h);
    return out;
}

Var gen_loss(Var coords, Var logits, const Molecule& clean, int vocab) {
    Tape& t = *coords.tape;
    const std::size_t n = clean.size();
    if (coords.value().rows() != n || logits.value().rows() != n ||
        logits.value().cols() != static_cast<std::size_t>(vocab)) {
        throw DimensionError("generator prediction does not match the clean molecule");
    }
    const std::size_t nv = clean.valid_count();
    if (nv == 0) throw ContractError("generator loss needs at least one valid atom");
    Var m = t.constant(mask_column(clean.mask));
    Var dx = dm::mul_col(dm::sub(coords, t.constant(clean.coords)), m);
    Var dl = dm::mul_col(dm::sub(logits, t.constant(molkit::one_hot(clean, vocab))), m);
    return dm::scale(dm::add(dm::sum(dm::square(dx)), dm::sum(dm::square(dl))), 1.0 / static_cast<double>(nv));
}

Molecule sample(const Array& z, std::size_t atom_count, ParamStore& params, const GenConfig& cfg,
                std::uint64_t seed, const SampleOptions& opts) {
    validate(cfg);
    if (atom_count < 1) throw ParameterError("cannot sample a molecule with no atoms");
    const dm::CosineSchedule sched(cfg.steps);
    const std::vector<int> order = sched.strided(opts.steps == 0 ? cfg.steps : opts.steps);
    const std::vector<bool> mask(atom_count, true);
    const auto a = static_cast<std::size_t>(cfg.vocab);

    Rng rng(seed);
    Array x = coordinate_noise(rng, mask, opts.noise_rotation);
    Array l = gaussian(rng, atom_count, a);
    Array final_logits;
    for (std::size_t j = 0; j < order.size(); ++j) {
        const int k = order[j];
        Tape t(dm::GradMode::Disabled);
        const Prediction pred = denoise(t, params, cfg, t.constant(x), t.constant(l), k, t.constant(z), mask, 1);
        if (j + 1 == order.size()) {
            x = pred.coords.value();
            final_logits = pred.logits.value();
        } else {
            const double ab = sched.alpha_bar(k);
            const double abp = sched.alpha_bar(order[j + 1]);
            const double b = 1.0 - ab / abp;
            const double c0 = std::sqrt(abp) * b / (1.0 - ab);
            const double ct = std::sqrt(1.0 - b) * (1.0 - abp) / (1.0 - ab);
            const double sd = std::sqrt(b * (1.0 - abp) / (1.0 - ab));
            const Array ex = coordinate_noise(rng, mask, opts.noise_rotation);
            const Array el = gaussian(rng, atom_count, a);
            const Array& x0 = pred.coords.value();
            const Array& l0 = pred.logits.value();
            for (std::size_t i = 0; i < x.size(); ++i) x[i] = c0 * x0[i] + ct * x[i] + sd * ex[i];
            for (std::size_t i = 0; i < l.size(); ++i) l[i] = c0 * l0[i] + ct * l[i] + sd * el[i];
        }
        if (opts.on_step) opts.on_step(static_cast<int>(j), x);
    }

    Molecule m;
    m.coords = x;
    m.mask = mask;
    m.atoms.resize(atom_count);
    for (std::size_t i = 0; i < atom_count; ++i) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < a; ++k)
            if (final_logits.at(i, k) > final_logits.at(i, best)) best = k;
        m.atoms[i] = static_cast<int>(best);
    }
    return m;
}

} // namespace repcond::generator
