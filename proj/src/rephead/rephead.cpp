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

#include "repcond/rephead/rephead.hpp"

#include <cmath>
#include <string>

#include "repcond/diffmath/nn.hpp"
#include "repcond/diffmath/ops.hpp"
#include "repcond/errors.hpp"
#include "repcond/rng.hpp"

namespace repcond::rephead {

namespace dm = diffmath;

namespace {

Var mlp(Tape& t, ParamStore& ps, const std::string& prefix, Var g) {
    Var h = dm::tanh(dm::linear(t, ps, prefix + ".l1", g));
    return dm::linear(t, ps, prefix + ".l2", h);
}

Array noise(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Array eps(dm::Shape{n});
    for (auto& v : eps.data()) v = rng.normal();
    return eps;
}

} // namespace

void validate(const HeadConfig& cfg) {
    if (cfg.latent_dim < 2) throw ParameterError("latent dim must be >= 2, got " + std::to_string(cfg.latent_dim));
    if (!(cfg.v_min < cfg.v_max)) throw ParameterError("log-variance clamp needs v_min < v_max");
}

ParamStore init_head(const HeadConfig& cfg, int layers, int feat_dim, std::uint64_t seed) {
    validate(cfg);
    if (layers < 1 || feat_dim < 1) throw ParameterError("head needs positive layer count and feature dim");
    Rng rng(derive_seed(seed, "head-init"));
    const auto d = static_cast<std::size_t>(feat_dim);
    const auto dz = static_cast<std::size_t>(cfg.latent_dim);
    ParamStore ps;
    ps.add("head.w_logits", Array(dm::Shape{static_cast<std::size_t>(layers)}));
    // features are unit vectors, so scale the first layer by sqrt(d)
    const double in_scale = std::sqrt(static_cast<double>(d));
    dm::add_linear(ps, "head.mu.l1", d, 2 * dz, rng, in_scale);
    dm::add_linear(ps, "head.mu.l2", 2 * dz, dz, rng);
    dm::add_linear(ps, "head.lv.l1", d, 2 * dz, rng, in_scale);
    dm::add_linear(ps, "head.lv.l2", 2 * dz, dz, rng, 0.1);
    return ps;
}

Var pool_layers(const std::vector<Var>& graph_feats, Var w_logits) {
    if (graph_feats.empty() || w_logits.value().size() != graph_feats.size() || w_logits.value().ndim() != 1) {
        throw ContractError("layer pooling: " + std::to_string(graph_feats.size()) + " layers but " +
                            std::to_string(w_logits.value().size()) + " pooling logits");
    }
    std::vector<Var> rows;
    rows.reserve(graph_feats.size());
    for (const auto& g : graph_feats) rows.push_back(dm::reshape(g, dm::Shape{1, g.value().size()}));
    return dm::matmul(dm::softmax(w_logits), dm::concat(rows, 0));
}

Array pool_layers(const std::vector<Array>& graph_feats, const Array& w_logits) {
    Tape t(dm::GradMode::Disabled);
    std::vector<Var> feats;
    for (const auto& g : graph_feats) feats.push_back(t.constant(g));
    return pool_layers(feats, t.constant(w_logits)).value();
}

PosteriorVars posterior(Tape& t, ParamStore& params, const HeadConfig& cfg, Var g) {
    PosteriorVars p;
    p.mu = mlp(t, params, "head.mu", g);
    p.log_var = dm::clamp(mlp(t, params, "head.lv", g), cfg.v_min, cfg.v_max);
    return p;
}

LatentPosterior posterior(const Array& g, ParamStore& params, const HeadConfig& cfg) {
    Tape t(dm::GradMode::Disabled);
    const PosteriorVars p = posterior(t, params, cfg, t.constant(g));
    return {p.mu.value(), p.log_var.value()};
}

LatentPosterior encode_posterior(const encoder::LayerStack& stack, ParamStore& params, const HeadConfig& cfg) {
    return posterior(pool_layers(stack.graph_feats, params.value("head.w_logits")), params, cfg);
}

Var reparameterize(const PosteriorVars& p, std::uint64_t seed) {
    Tape& t = *p.mu.tape;
    Var eps = t.constant(noise(p.mu.value().size(), seed));
    return dm::add(p.mu, dm::mul(dm::exp(dm::scale(p.log_var, 0.5)), eps));
}

Array reparameterize(const LatentPosterior& p, std::uint64_t seed) {
    const Array eps = noise(p.mu.size(), seed);
    Array z = p.mu;
    for (std::size_t k = 0; k < z.size(); ++k) z[k] += std::exp(0.5 * p.log_var[k]) * eps[k];
    return z;
}

double kl_loss(const LatentPosterior& p) {
    if (p.mu.size() != p.log_var.size()) throw DimensionError("posterior mu and log_var differ in length");
    double s = 0;
    for (std::size_t k = 0; k < p.mu.size(); ++k) {
        s += p.mu[k] * p.mu[k] + (std::expm1(p.log_var[k]) - p.log_var[k]);
    }
    return 0.5 * s;
}

Var kl_loss(const PosteriorVars& p) {
    Tape& t = *p.mu.tape;
    const double value = kl_loss(LatentPosterior{p.mu.value(), p.log_var.value()});
    return t.record(Array::scalar(value), {p.mu, p.log_var},
                    [mu = p.mu.id, lv = p.log_var.id](Tape& t, std::uint32_t self) {
                        const double g = t.out_grad(self).item();
                        if (Array* gm = t.grad_target(mu)) {
                            const Array& m = t.value(mu);
                            for (std::size_t k = 0; k < m.size(); ++k) (*gm)[k] += g * m[k];
                        }
                        if (Array* gl = t.grad_target(lv)) {
                            const Array& v = t.value(lv);
                            for (std::size_t k = 0; k < v.size(); ++k) (*gl)[k] += 0.5 * g * std::expm1(v[k]);
                        }
                    });
}

} // namespace repcond::rephead
