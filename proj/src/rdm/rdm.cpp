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

#include "repcond/rdm/rdm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>

#include "repcond/diffmath/adam.hpp"
#include "repcond/diffmath/nn.hpp"
#include "repcond/diffmath/ops.hpp"
#include "repcond/diffmath/schedule.hpp"
#include "repcond/errors.hpp"
#include "repcond/rng.hpp"

namespace repcond::rdm {

namespace dm = diffmath;
using diffmath::Tape;
using diffmath::Var;

namespace {

constexpr double kStdFloor = 1e-6;

Array time_embedding(const std::vector<int>& steps, std::size_t dim) {
    Array e(dm::Shape{steps.size(), dim});
    const std::size_t half = dim / 2;
    for (std::size_t r = 0; r < steps.size(); ++r) {
        for (std::size_t j = 0; j < half; ++j) {
            const double freq = std::exp(-std::log(1000.0) * static_cast<double>(j) / static_cast<double>(half));
            e.at(r, 2 * j) = std::sin(steps[r] * freq);
            e.at(r, 2 * j + 1) = std::cos(steps[r] * freq);
        }
    }
    return e;
}

// eps estimate for a batch of standardized states
Var predict(Tape& t, ParamStore& ps, const RdmConfig& cfg, Var x, const std::vector<int>& steps,
            const std::vector<std::size_t>& count_rows) {
    Var emb = dm::add(t.constant(time_embedding(steps, static_cast<std::size_t>(cfg.embed_dim))),
                      dm::gather_rows(t.param(ps, "rdm.count_embed"), count_rows));
    Var h = x;
    for (std::size_t l = 0; l < cfg.hidden.size(); ++l) {
        const auto p = "rdm.h" + std::to_string(l);
        Var pre = dm::add(dm::linear(t, ps, p, h), dm::matmul(emb, t.param(ps, p + ".we")));
        h = dm::tanh(pre);
    }
    return dm::linear(t, ps, "rdm.out", h);
}

std::size_t count_row(const RdmConfig& cfg, int count) {
    if (count < 0 || count > cfg.max_atom_count) {
        throw ParameterError("atom count " + std::to_string(count) + " outside [0, " +
                             std::to_string(cfg.max_atom_count) + "]");
    }
    return static_cast<std::size_t>(count);
}

ParamStore init_network(const RdmConfig& cfg, std::size_t dz, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "rdm-init"));
    ParamStore ps;
    const auto e = static_cast<std::size_t>(cfg.embed_dim);
    ps.add("rdm.count_embed", dm::init_weight(static_cast<std::size_t>(cfg.max_atom_count) + 1, e, rng,
                                              std::sqrt(static_cast<double>(cfg.max_atom_count) + 1) * 0.1));
    std::size_t in = dz;
    for (std::size_t l = 0; l < cfg.hidden.size(); ++l) {
        const auto p = "rdm.h" + std::to_string(l);
        const auto out = static_cast<std::size_t>(cfg.hidden[l]);
        dm::add_linear(ps, p, in, out, rng);
        ps.add(p + ".we", dm::init_weight(e, out, rng));
        in = out;
    }
    dm::add_linear(ps, "rdm.out", in, dz, rng);
    return ps;
}

struct Batch {
    Array x;  // noisy standardized latents
    Array eps;
    std::vector<int> steps;
    std::vector<std::size_t> count_rows;
};

Batch make_batch(const Array& data, const std::vector<int>& counts, const std::vector<std::size_t>& rows,
                 const dm::CosineSchedule& sched, const RdmConfig& cfg, Rng& rng, bool dropout) {
    const std::size_t dz = data.cols();
    Batch b;
    b.x = Array(dm::Shape{rows.size(), dz});
    b.eps = Array(dm::Shape{rows.size(), dz});
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const int k = static_cast<int>(rng.uniform_int(0, sched.steps() - 1));
        const double ab = sched.alpha_bar(k);
        for (std::size_t c = 0; c < dz; ++c) {
            const double e = rng.normal();
            b.eps.at(r, c) = e;
            b.x.at(r, c) = std::sqrt(ab) * data.at(rows[r], c) + std::sqrt(1.0 - ab) * e;
        }
        b.steps.push_back(k);
        const bool drop = dropout && rng.bernoulli(cfg.count_dropout);
        b.count_rows.push_back(drop ? 0 : count_row(cfg, counts[rows[r]]));
    }
    return b;
}

Var batch_loss(Tape& t, ParamStore& ps, const RdmConfig& cfg, const Batch& b) {
    Var pred = predict(t, ps, cfg, t.constant(b.x), b.steps, b.count_rows);
    return dm::mean(dm::square(dm::sub(pred, t.constant(b.eps))));
}

} // namespace

void validate(const RdmConfig& cfg) {
    if (cfg.steps < 10) throw ParameterError("RDM needs at least 10 diffusion steps, got " + std::to_string(cfg.steps));
    if (cfg.hidden.empty()) throw ParameterError("RDM needs at least one hidden layer");
    for (int h : cfg.hidden)
        if (h < 1) throw ParameterError("RDM hidden widths must be positive");
    if (cfg.embed_dim < 2 || cfg.embed_dim % 2 != 0) throw ParameterError("RDM embedding dim must be even and >= 2");
    if (cfg.max_atom_count < 1) throw ParameterError("RDM max atom count must be positive");
    if (!(cfg.count_dropout >= 0 && cfg.count_dropout <= 1)) throw ParameterError("count dropout must be in [0, 1]");
    if (!(cfg.clip > 0)) throw ParameterError("RDM clip bound must be positive");
}

TrainResult train_rdm(const Array& latents, const std::vector<int>& atom_counts, const RdmConfig& cfg,
                      const TrainOptions& opts) {
    validate(cfg);
    const std::size_t m = latents.rows();
    if (latents.ndim() != 2 || m < 100) {
        throw ParameterError("RDM training needs at least 100 latents, got " + std::to_string(latents.ndim() == 2 ? m : 0));
    }
    if (atom_counts.size() != m) throw ParameterError("one atom count per latent is required");
    if (!latents.all_finite()) throw NumericError("RDM latents contain non-finite values");
    if (opts.epochs < 1 || opts.batch_size < 1) throw ParameterError("RDM training needs epochs >= 1 and batch >= 1");
    const std::size_t dz = latents.cols();
    for (int c : atom_counts) count_row(cfg, c);

    Array mean(dm::Shape{dz}), sd(dm::Shape{dz});
    for (std::size_t c = 0; c < dz; ++c) {
        double s = 0, ss = 0;
        for (std::size_t r = 0; r < m; ++r) s += latents.at(r, c);
        const double mu = s / static_cast<double>(m);
        for (std::size_t r = 0; r < m; ++r) ss += std::pow(latents.at(r, c) - mu, 2);
        mean[c] = mu;
        sd[c] = std::max(std::sqrt(ss / static_cast<double>(m)), kStdFloor);
    }
    Array data = latents;
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < dz; ++c) data.at(r, c) = (data.at(r, c) - mean[c]) / sd[c];

    TrainResult res;
    res.params = init_network(cfg, dz, opts.seed);
    ParamStore& ps = res.params;
    const dm::CosineSchedule sched(cfg.steps);

    std::vector<std::size_t> all(m);
    std::iota(all.begin(), all.end(), 0);
    auto evaluate = [&] {
        Rng rng(derive_seed(opts.seed, "rdm-eval"));
        const Batch b = make_batch(data, atom_counts, all, sched, cfg, rng, false);
        Tape t(dm::GradMode::Disabled);
        return batch_loss(t, ps, cfg, b).value().item();
    };
    res.initial_loss = evaluate();

    dm::Adam adam(dm::AdamConfig{.lr = opts.lr});
    std::vector<std::size_t> order = all;
    const std::size_t per_epoch = (m + opts.batch_size - 1) / opts.batch_size;
    const double total_steps = static_cast<double>(per_epoch) * opts.epochs;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        Rng rng(derive_seed(opts.seed, "rdm-epoch", static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), rng.engine());
        double total = 0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < m; start += opts.batch_size) {
            const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                order.begin() + static_cast<std::ptrdiff_t>(std::min(m, start + opts.batch_size)));
            const Batch b = make_batch(data, atom_counts, rows, sched, cfg, rng, true);
            // cosine decay to zero; the sampler amplifies any residual bias in eps
            adam.set_lr(opts.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(adam.steps()) / total_steps)));
            ps.zero_grad();
            total += dm::value_and_grad([&](Tape& t) { return batch_loss(t, ps, cfg, b); }, ps);
            adam.step(ps);
            ++batches;
        }
        res.epoch_losses.push_back(total / static_cast<double>(batches));
        if (!std::isfinite(res.epoch_losses.back())) {
            std::ostringstream trace;
            for (double v : res.epoch_losses) trace << ' ' << v;
            throw NumericError("RDM training diverged at epoch " + std::to_string(epoch) + "; loss trace:" + trace.str());
        }
    }
    res.final_loss = evaluate();
    for (const auto& name : ps.names()) ps.set_trainable(name, false);
    ps.add("rdm.latent_mean", mean);
    ps.add("rdm.latent_std", sd);
    ps.set_trainable("rdm.latent_mean", false);
    ps.set_trainable("rdm.latent_std", false);
    return res;
}

namespace {

Array sample_rows(ParamStore& params, const RdmConfig& cfg, const std::vector<int>& counts,
                  const std::vector<std::uint64_t>& seeds) {
    validate(cfg);
    const Array& mean = params.value("rdm.latent_mean");
    const Array& sd = params.value("rdm.latent_std");
    const std::size_t dz = mean.size();
    const std::size_t n = counts.size();
    std::vector<std::size_t> rows;
    for (int c : counts) rows.push_back(count_row(cfg, c));
    const dm::CosineSchedule sched(cfg.steps);

    std::vector<Rng> rngs;
    rngs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) rngs.emplace_back(seeds[i]);
    Array x(dm::Shape{n, dz});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < dz; ++c) x.at(i, c) = rngs[i].normal();

    for (int k = sched.steps() - 1; k >= 0; --k) {
        Tape t(dm::GradMode::Disabled);
        const Array eps = predict(t, params, cfg, t.constant(x), std::vector<int>(n, k), rows).value();
        const double ab = sched.alpha_bar(k);
        const double abp = k > 0 ? sched.alpha_bar(k - 1) : 1.0;
        const double b = sched.beta(k);
        const double c0 = std::sqrt(abp) * b / (1.0 - ab);
        const double ct = std::sqrt(1.0 - b) * (1.0 - abp) / (1.0 - ab);
        const double sdev = std::sqrt(b * (1.0 - abp) / (1.0 - ab));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < dz; ++c) {
                const double xt = x.at(i, c);
                const double x0 = std::clamp((xt - std::sqrt(1.0 - ab) * eps.at(i, c)) / std::sqrt(ab), -cfg.clip, cfg.clip);
                x.at(i, c) = k > 0 ? c0 * x0 + ct * xt + sdev * rngs[i].normal() : x0;
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < dz; ++c) x.at(i, c) = mean[c] + sd[c] * x.at(i, c);
    return x;
}

} // namespace

Array sample_rdm_batch(ParamStore& params, const RdmConfig& cfg, const std::vector<int>& counts, std::uint64_t seed) {
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < counts.size(); ++i) seeds.push_back(derive_seed(seed, "rdm-sample", i));
    return sample_rows(params, cfg, counts, seeds);
}

Array sample_rdm(ParamStore& params, const RdmConfig& cfg, std::optional<int> atom_count, std::uint64_t seed) {
    const Array row = sample_rows(params, cfg, {atom_count.value_or(0)}, {seed});
    return row.reshaped(dm::Shape{row.size()});
}

} // namespace repcond::rdm
