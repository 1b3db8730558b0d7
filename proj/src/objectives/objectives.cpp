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

#include "repcond/objectives/objectives.hpp"

#include <cmath>
#include <numbers>

#include "repcond/diffmath/nn.hpp"
#include "repcond/diffmath/ops.hpp"
#include "repcond/errors.hpp"
#include "repcond/rephead/rephead.hpp"
#include "repcond/rng.hpp"

namespace repcond::objectives {

namespace dm = diffmath;

void validate(const LossWeights& w) {
    if (!(w.lambda_kl >= 0 && w.lambda_perc >= 0 && w.lambda_repa >= 0 && w.w_min >= 0)) {
        throw ParameterError("loss weights must be non-negative");
    }
    if (!(w.w_min <= w.w_max)) throw ParameterError("cosine weight needs w_min <= w_max");
}

int resolve_encoder_layer(const RepaConfig& cfg, int encoder_layers) {
    const int l = cfg.encoder_layer == 0 ? encoder_layers : cfg.encoder_layer;
    if (l < 1 || l > encoder_layers) {
        throw ParameterError("encoder tap layer " + std::to_string(l) + " outside [1, " +
                             std::to_string(encoder_layers) + "]");
    }
    return l;
}

int resolve_generator_layer(const RepaConfig& cfg, int generator_depth) {
    const int l = cfg.generator_layer == 0 ? (generator_depth + 1) / 2 : cfg.generator_layer;
    if (l < 1 || l > generator_depth) {
        throw ParameterError("generator tap layer " + std::to_string(l) + " outside [1, " +
                             std::to_string(generator_depth) + "]");
    }
    return l;
}

double cosine_weight(double t, double w_min, double w_max) {
    if (!(t >= 0.0 && t <= 1.0)) throw ParameterError("cosine weight needs t in [0, 1], got " + std::to_string(t));
    if (t == 0.0) return w_max;  // w_min + (w_max - w_min) can round away from w_max
    return w_min + (w_max - w_min) * (1.0 + std::cos(std::numbers::pi * t)) / 2.0;
}

Array argmax_onehot(const Array& logits) {
    Array out(logits.shape());
    const std::size_t n = logits.rows(), a = logits.cols();
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < a; ++k) {
            if (logits.at(i, k) > logits.at(i, best)) best = k;
        }
        if (a > 0) out.at(i, best) = 1.0;
    }
    return out;
}

Var straight_through_onehot(Var logits) {
    return logits.tape->record(argmax_onehot(logits.value()), {logits}, [in = logits.id](Tape& t, std::uint32_t self) {
        if (Array* g = t.grad_target(in)) g->mat() += t.out_grad(self).mat();
    });
}

Var perceptual_loss(Tape& t, ParamStore& enc_params, const encoder::EncoderConfig& enc_cfg, Var w_logits,
                    const Molecule& clean, Var denoised_coords, Var denoised_logits, double time,
                    const LossWeights& weights, const std::vector<Array>* clean_feats) {
    const std::size_t n = clean.size();
    if (denoised_coords.value().rows() != n || denoised_logits.value().rows() != n) {
        throw ContractError("perceptual loss: clean molecule has " + std::to_string(n) +
                            " atoms, denoised prediction has " + std::to_string(denoised_coords.value().rows()));
    }
    std::vector<Array> own;
    if (!clean_feats) {
        own = encoder::encode(clean, enc_params, enc_cfg).graph_feats;
        clean_feats = &own;
    }
    std::vector<Var> target_layers;
    for (const auto& g : *clean_feats) target_layers.push_back(t.constant(g));
    Var target = dm::stop_gradient(rephead::pool_layers(target_layers, w_logits));

    const auto enc = encoder::encode(t, enc_params, enc_cfg, denoised_coords,
                                     straight_through_onehot(denoised_logits), clean);
    Var pooled = rephead::pool_layers(enc.graph_feats, w_logits);
    const double w = cosine_weight(time, weights.w_min, weights.w_max);
    return dm::scale(dm::sum(dm::square(dm::sub(target, pooled))), w);
}

ParamStore init_projection(int gen_dim, int enc_dim, std::uint64_t seed) {
    if (gen_dim < 1 || enc_dim < 1) throw ParameterError("projection dims must be positive");
    Rng rng(derive_seed(seed, "repa-init"));
    ParamStore ps;
    dm::add_linear(ps, "repa.l1", static_cast<std::size_t>(gen_dim), static_cast<std::size_t>(enc_dim), rng);
    dm::add_linear(ps, "repa.l2", static_cast<std::size_t>(enc_dim), static_cast<std::size_t>(enc_dim), rng);
    return ps;
}

Var repa_loss(Tape& t, ParamStore& proj_params, Var gen_feats, const Array& enc_feats,
              const std::vector<bool>& mask) {
    const std::size_t n = gen_feats.value().rows();
    if (enc_feats.rows() != n || mask.size() != n) {
        throw DimensionError("repa loss: generator features " + dm::shape_string(gen_feats.shape()) +
                             ", encoder features " + dm::shape_string(enc_feats.shape()) + ", mask " +
                             std::to_string(mask.size()));
    }
    std::vector<std::size_t> valid;
    for (std::size_t i = 0; i < n; ++i) {
        if (mask[i]) valid.push_back(i);
    }
    if (valid.empty()) throw ContractError("repa loss needs at least one valid atom");
    Var proj = dm::linear(t, proj_params, "repa.l2", dm::tanh(dm::linear(t, proj_params, "repa.l1", gen_feats)));
    Var enc = t.constant(enc_feats);
    Var cos = dm::row_cosine_similarity(dm::gather_rows(proj, valid), dm::gather_rows(enc, valid));
    return dm::neg(dm::mean(cos));
}

Var total_loss(const LossTerms& terms, const LossWeights& weights) {
    auto check = [](Var v, const char* name) {
        if (v.tape && !v.value().all_finite()) {
            throw NumericError(std::string("non-finite loss component ") + name + " = " +
                               std::to_string(v.value().item()));
        }
    };
    check(terms.gen, "l_gen");
    check(terms.kl, "l_kl");
    check(terms.perc, "l_perc");
    check(terms.repa, "l_repa");
    Var total = terms.gen;
    auto add = [&](Var v, double lambda, const char* name) {
        if (lambda == 0.0) return;
        if (!v.tape) throw ContractError(std::string("loss component ") + name + " has a weight but no value");
        total = dm::add(total, dm::scale(v, lambda));
    };
    add(terms.kl, weights.lambda_kl, "l_kl");
    add(terms.perc, weights.lambda_perc, "l_perc");
    add(terms.repa, weights.lambda_repa, "l_repa");
    return total;
}

} // namespace repcond::objectives
