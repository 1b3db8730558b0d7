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

#include "repcond/encoder/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>

#include "repcond/diffmath/adam.hpp"
#include "repcond/diffmath/nn.hpp"
#include "repcond/diffmath/ops.hpp"
#include "repcond/errors.hpp"
#include "repcond/rng.hpp"

namespace repcond::encoder {

namespace dm = diffmath;

namespace {

std::string layer_prefix(int l) { return "enc.l" + std::to_string(l); }

struct EdgeTerms {
    Var d2;      // E x 1
    Var weight;  // E x 1
    Var diff;    // E x 3, x_src - x_dst
};

EdgeTerms edge_terms(Var coords, const EdgeSet& edges, double cutoff) {
    Tape& t = *coords.tape;
    Var diff = dm::sub(dm::gather_rows(coords, edges.src), dm::gather_rows(coords, edges.dst));
    Var d2 = dm::row_sums(dm::square(diff));
    const std::size_t e = edges.src.size();
    Array bonded(dm::Shape{e, 1});
    Array radial(dm::Shape{e, 1});
    for (std::size_t k = 0; k < e; ++k) {
        bonded[k] = edges.bonded[k] ? 1.0 : 0.0;
        radial[k] = 1.0 - bonded[k];
    }
    Var envelope = dm::square(dm::add_scalar(dm::scale(d2, -1.0 / (cutoff * cutoff)), 1.0));
    Var weight = dm::add(t.constant(std::move(bonded)), dm::mul(t.constant(std::move(radial)), envelope));
    return {d2, weight, diff};
}

void check_weights(ParamStore& params, const EncoderConfig& cfg, const Array& atom_inputs) {
    const Array& embed = params.value("enc.embed");
    if (embed.rows() != static_cast<std::size_t>(cfg.vocab) || atom_inputs.cols() != embed.rows()) {
        throw ContractError("encoder vocabulary mismatch: weights have " + std::to_string(embed.rows()) +
                            " atom types, config " + std::to_string(cfg.vocab) + ", inputs " +
                            std::to_string(atom_inputs.cols()));
    }
    if (embed.cols() != static_cast<std::size_t>(cfg.dim)) {
        throw ContractError("encoder weights have feature dim " + std::to_string(embed.cols()) +
                            ", config says " + std::to_string(cfg.dim));
    }
}

double denoise_loss(ParamStore& params, const EncoderConfig& cfg, const Molecule& clean,
                    const Molecule& noisy, Tape& t, Var* loss_out) {
    Var coords = t.constant(noisy.coords);
    Var x = t.constant(molkit::one_hot(noisy, cfg.vocab));
    const EncodedGraph g = encode(t, params, cfg, coords, x, noisy);
    Var pred = predict_displacement(t, params, cfg, coords, g.node_feats.back(), noisy);

    Array target = noisy.coords;
    Array valid(dm::Shape{clean.size()});
    for (std::size_t i = 0; i < clean.size(); ++i) {
        valid[i] = clean.mask[i] ? 1.0 : 0.0;
        for (std::size_t k = 0; k < 3; ++k) target.at(i, k) -= clean.coords.at(i, k);
    }
    Var err = dm::mul_col(dm::sub(pred, t.constant(std::move(target))), t.constant(std::move(valid)));
    Var loss = dm::scale(dm::sum(dm::square(err)), 1.0 / (3.0 * static_cast<double>(clean.valid_count())));
    if (loss_out) *loss_out = loss;
    return loss.value().item();
}

} // namespace

void validate(const EncoderConfig& cfg) {
    if (cfg.layers < 2) throw ParameterError("encoder needs at least 2 layers, got " + std::to_string(cfg.layers));
    if (cfg.dim < 4) throw ParameterError("encoder feature dim must be >= 4, got " + std::to_string(cfg.dim));
    if (cfg.vocab < 1 || cfg.message_hidden < 1) throw ParameterError("encoder widths must be positive");
    if (!(cfg.cutoff > 0)) throw ParameterError("encoder cutoff must be positive");
    if (!(cfg.sigma_pre > 0)) throw ParameterError("denoising noise std must be positive");
}

EdgeSet build_edges(const Array& coords, const Molecule& topology, double cutoff) {
    const std::size_t n = topology.size();
    std::vector<char> bonded(n * n, 0);
    for (const auto& b : topology.bonds) {
        bonded[b.i * n + b.j] = bonded[b.j * n + b.i] = 1;
    }
    const double rc2 = cutoff * cutoff;
    EdgeSet e;
    for (std::size_t i = 0; i < n; ++i) {
        if (!topology.mask[i]) continue;
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j || !topology.mask[j]) continue;
            double d2 = 0;
            for (std::size_t k = 0; k < 3; ++k) {
                const double d = coords.at(i, k) - coords.at(j, k);
                d2 += d * d;
            }
            const bool b = bonded[i * n + j] != 0;
            if (b || d2 < rc2) {
                e.src.push_back(i);
                e.dst.push_back(j);
                e.bonded.push_back(b);
            }
        }
    }
    return e;
}

ParamStore init_encoder(const EncoderConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    Rng rng(derive_seed(seed, "encoder-init"));
    const auto d = static_cast<std::size_t>(cfg.dim);
    const auto h = static_cast<std::size_t>(cfg.message_hidden);
    ParamStore ps;
    ps.add("enc.embed", dm::init_weight(static_cast<std::size_t>(cfg.vocab), d, rng,
                                        std::sqrt(static_cast<double>(cfg.vocab))));
    for (int l = 0; l < cfg.layers; ++l) {
        const auto p = layer_prefix(l);
        dm::add_pair_mlp(ps, p + ".msg", d, h, d, rng);
        ps.add(p + ".upd", dm::init_weight(d, d, rng));
    }
    dm::add_pair_mlp(ps, "enc.denoise", d, h, 1, rng, 0.1);
    return ps;
}

EncodedGraph encode(Tape& t, ParamStore& params, const EncoderConfig& cfg, Var coords, Var atom_inputs,
                    const Molecule& topology) {
    check_weights(params, cfg, atom_inputs.value());
    const std::size_t n = topology.size();
    if (coords.value().rows() != n || coords.value().cols() != 3 || atom_inputs.value().rows() != n) {
        throw DimensionError("encoder inputs " + dm::shape_string(coords.shape()) + " / " +
                             dm::shape_string(atom_inputs.shape()) + " do not match " + std::to_string(n) +
                             " atoms");
    }
    const EdgeSet edges = build_edges(coords.value(), topology, cfg.cutoff);

    EncodedGraph out;
    Var h = dm::matmul(atom_inputs, t.param(params, "enc.embed"));
    std::optional<EdgeTerms> et;
    if (!edges.src.empty()) et = edge_terms(coords, edges, cfg.cutoff);
    for (int l = 0; l < cfg.layers; ++l) {
        if (et) {
            const auto p = layer_prefix(l);
            Var msg = dm::mul_col(dm::pair_mlp(t, params, p + ".msg", h, edges.src, edges.dst, et->d2), et->weight);
            Var agg = dm::scatter_add_rows(msg, edges.src, n);
            h = dm::add(h, dm::tanh(dm::matmul(agg, t.param(params, p + ".upd"))));
        }
        out.node_feats.push_back(h);
        out.graph_feats.push_back(dm::l2_normalize(dm::masked_mean_rows(h, topology.mask)));
    }
    return out;
}

LayerStack encode(const Molecule& m, ParamStore& params, const EncoderConfig& cfg) {
    Tape t(diffmath::GradMode::Disabled);
    const EncodedGraph g = encode(t, params, cfg, t.constant(m.coords), t.constant(molkit::one_hot(m, cfg.vocab)), m);
    LayerStack s;
    for (std::size_t l = 0; l < g.node_feats.size(); ++l) {
        s.node_feats.push_back(g.node_feats[l].value());
        s.graph_feats.push_back(g.graph_feats[l].value());
    }
    return s;
}

Var predict_displacement(Tape& t, ParamStore& params, const EncoderConfig& cfg, Var coords,
                         Var last_node_feats, const Molecule& topology) {
    const std::size_t n = topology.size();
    const EdgeSet edges = build_edges(coords.value(), topology, cfg.cutoff);
    if (edges.src.empty()) return t.constant(Array(dm::Shape{n, 3}));
    const EdgeTerms et = edge_terms(coords, edges, cfg.cutoff);
    Var gate = dm::mul(dm::pair_mlp(t, params, "enc.denoise", last_node_feats, edges.src, edges.dst, et.d2), et.weight);
    return dm::scatter_add_rows(dm::mul_col(et.diff, gate), edges.src, n);
}

PretrainResult pretrain_denoising(const molkit::Dataset& data, const EncoderConfig& cfg,
                                  const PretrainOptions& opts) {
    validate(cfg);
    if (data.train.empty()) throw ParameterError("pretraining needs a non-empty training split");
    if (opts.epochs < 1 || opts.batch_size < 1) throw ParameterError("pretraining needs epochs >= 1 and batch >= 1");

    PretrainResult res;
    res.params = init_encoder(cfg, opts.seed);
    ParamStore& ps = res.params;

    auto evaluate = [&] {
        double total = 0;
        for (std::size_t k = 0; k < data.train.size(); ++k) {
            const Molecule& m = data.molecules[data.train[k]];
            const Molecule noisy = molkit::perturb_coords(m, cfg.sigma_pre, derive_seed(opts.seed, "pretrain-eval", k));
            Tape t(diffmath::GradMode::Disabled);
            total += denoise_loss(ps, cfg, m, noisy, t, nullptr);
        }
        return total / static_cast<double>(data.train.size());
    };
    res.initial_loss = evaluate();

    dm::Adam adam(dm::AdamConfig{.lr = opts.lr});
    std::vector<std::size_t> order(data.train.size());
    std::uint64_t draw = 0;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle(derive_seed(opts.seed, "pretrain-shuffle", static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle.engine());
        double epoch_total = 0;
        for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
            const std::size_t stop = std::min(order.size(), start + opts.batch_size);
            const double inv = 1.0 / static_cast<double>(stop - start);
            ps.zero_grad();
            for (std::size_t k = start; k < stop; ++k) {
                const Molecule& m = data.molecules[data.train[order[k]]];
                const Molecule noisy = molkit::perturb_coords(m, cfg.sigma_pre, derive_seed(opts.seed, "pretrain-noise", draw++));
                Tape t;
                Var loss;
                epoch_total += denoise_loss(ps, cfg, m, noisy, t, &loss);
                t.backward(dm::scale(loss, inv));
                t.write_param_grads(ps);
            }
            adam.step(ps);
        }
        const double mean = epoch_total / static_cast<double>(order.size());
        res.epoch_losses.push_back(mean);
        if (!std::isfinite(mean)) {
            std::ostringstream trace;
            for (double v : res.epoch_losses) trace << ' ' << v;
            throw NumericError("encoder pretraining diverged at epoch " + std::to_string(epoch) + "; loss trace:" + trace.str());
        }
    }
    res.final_loss = evaluate();
    for (const auto& name : ps.names()) ps.set_trainable(name, false);
    return res;
}

} // namespace repcond::encoder
