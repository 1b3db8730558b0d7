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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "internal.hpp"
#include "repcond/diffmath/adam.hpp"
#include "repcond/diffmath/ops.hpp"
#include "repcond/diffmath/schedule.hpp"
#include "repcond/errors.hpp"
#include "repcond/generator/generator.hpp"
#include "repcond/objectives/objectives.hpp"
#include "repcond/pipeline/phases.hpp"
#include "repcond/rephead/rephead.hpp"
#include "repcond/rng.hpp"

namespace repcond::pipeline {

namespace dm = diffmath;
using dm::ParamStore;
using dm::Tape;
using dm::Var;
using molkit::Molecule;

namespace {

enum class Mode { Full, Baseline };

struct Context {
    const RunConfig& cfg;
    Manifest manifest;
    molkit::Dataset data;
    ParamStore enc;
    std::vector<std::size_t> train;            // dataset indices
    std::vector<encoder::LayerStack> feats;    // clean features per training molecule
    int enc_tap = 0;  // 0-based layer index
    int gen_tap = 1;  // 1-based block

    explicit Context(const RunConfig& c) : cfg(c), manifest(Manifest::open(c.out_dir())) {}
};

ParamStore init_model(const RunConfig& cfg) {
    ParamStore ps = generator::init_generator(cfg.generator, derive_seed(cfg.seed, "init-generator"));
    ps.merge(rephead::init_head(cfg.head, cfg.encoder.layers, cfg.encoder.dim, derive_seed(cfg.seed, "init-head")));
    ps.merge(objectives::init_projection(cfg.generator.dim, cfg.encoder.dim, derive_seed(cfg.seed, "init-repa")));
    return ps;
}

Var pooled(Tape& t, ParamStore& model, const encoder::LayerStack& feats) {
    std::vector<Var> layers;
    for (const auto& g : feats.graph_feats) layers.push_back(t.constant(g));
    return rephead::pool_layers(layers, t.param(model, "head.w_logits"));
}

void check_log_var(const Array& lv, const rephead::HeadConfig& head, std::int64_t step) {
    for (double v : lv.data()) {
        if (!std::isfinite(v)) throw NumericError("non-finite log-variance at step " + std::to_string(step));
        if (!(v >= head.v_min && v <= head.v_max)) {
            throw ContractError("log-variance " + std::to_string(v) + " escaped [" + std::to_string(head.v_min) + ", " +
                                std::to_string(head.v_max) + "] at step " + std::to_string(step));
        }
    }
}

struct Draw {
    int t_index;
    std::uint64_t noise_seed;
    std::uint64_t latent_seed;
};

Draw training_draw(const RunConfig& cfg, std::uint64_t index) {
    Rng r(derive_seed(cfg.seed, "noise-t", index));
    return {static_cast<int>(r.uniform_int(0, cfg.generator.steps - 1)), derive_seed(cfg.seed, "noise", index),
            derive_seed(cfg.seed, "latent", index)};
}

struct MolLoss {
    Var total;
    double gen = 0;
    std::optional<double> kl, perc, repa;
};

MolLoss full_loss(Tape& t, Context& ctx, ParamStore& model, const Molecule& m, const encoder::LayerStack& feats,
                    const Draw& d, std::int64_t step) {
    const RunConfig& cfg = ctx.cfg;
    const Var g = pooled(t, model, feats);
    const rephead::PosteriorVars post = rephead::posterior(t, model, cfg.head, g);
    check_log_var(post.log_var.value(), cfg.head, step);
    const Var z = cfg.train.bypass_head ? post.mu : rephead::reparameterize(post, d.latent_seed);

    const generator::NoisyState noisy = generator::corrupt(m, cfg.generator, d.t_index, d.noise_seed);
    const generator::Prediction pred = generator::denoise(t, model, cfg.generator, t.constant(noisy.coords),
                                                          t.constant(noisy.atom_logits), d.t_index, z, m.mask, ctx.gen_tap);
    objectives::LossTerms terms;
    terms.gen = generator::gen_loss(pred.coords, pred.logits, m, cfg.generator.vocab);
    MolLoss out;
    if (cfg.loss.lambda_kl > 0) {
        terms.kl = rephead::kl_loss(post);
        out.kl = terms.kl.value().item();
    } else {
        out.kl = rephead::kl_loss(rephead::LatentPosterior{post.mu.value(), post.log_var.value()});
    }
    if (cfg.loss.lambda_perc > 0) {
        const double time = dm::CosineSchedule(cfg.generator.steps).time(d.t_index);
        terms.perc = objectives::perceptual_loss(t, ctx.enc, cfg.encoder, t.param(model, "head.w_logits"), m, pred.coords,
                                                 pred.logits, time, cfg.loss, &feats.graph_feats);
        out.perc = terms.perc.value().item();
    }
    if (cfg.loss.lambda_repa > 0) {
        terms.repa = objectives::repa_loss(t, model, pred.tap, feats.node_feats.at(ctx.enc_tap), m.mask);
        out.repa = terms.repa.value().item();
    }
    out.gen = terms.gen.value().item();
    auto finite = [](const std::optional<double>& v) { return !v || std::isfinite(*v); };
    const bool parts_ok = std::isfinite(out.gen) && finite(out.kl) && finite(out.perc) && finite(out.repa);
    if (parts_ok) out.total = objectives::total_loss(terms, cfg.loss);
    if (!parts_ok || !std::isfinite(out.total.value().item())) {
        std::ostringstream msg;
        msg << "non-finite total loss from l_gen = " << out.gen;
        if (out.kl) msg << ", l_kl = " << *out.kl << " (x " << cfg.loss.lambda_kl << ")";
        if (out.perc) msg << ", l_perc = " << *out.perc << " (x " << cfg.loss.lambda_perc << ")";
        if (out.repa) msg << ", l_repa = " << *out.repa << " (x " << cfg.loss.lambda_repa << ")";
        throw NumericError(msg.str());
    }
    return out;
}

// Generator conditioned on the head's mean and nothing else.
MolLoss baseline_loss(Tape& t, Context& ctx, ParamStore& model, const Molecule& m, const encoder::LayerStack& feats,
                      const Draw& d) {
    const RunConfig& cfg = ctx.cfg;
    const Var mu = rephead::posterior(t, model, cfg.head, pooled(t, model, feats)).mu;
    const generator::NoisyState noisy = generator::corrupt(m, cfg.generator, d.t_index, d.noise_seed);
    const generator::Prediction pred = generator::denoise(t, model, cfg.generator, t.constant(noisy.coords),
                                                          t.constant(noisy.atom_logits), d.t_index, mu, m.mask, ctx.gen_tap);
    MolLoss out;
    out.total = generator::gen_loss(pred.coords, pred.logits, m, cfg.generator.vocab);
    out.gen = out.total.value().item();
    if (!std::isfinite(out.gen)) throw NumericError("non-finite loss component l_gen = " + std::to_string(out.gen));
    return out;
}

double eval_l_gen(Context& ctx, ParamStore& model) {
    const RunConfig& cfg = ctx.cfg;
    const std::size_t n = std::min(cfg.train.eval_molecules, ctx.train.size());
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const Molecule& m = ctx.data.molecules[ctx.train[i]];
        Rng r(derive_seed(cfg.seed, "eval-t", i));
        const int k = static_cast<int>(r.uniform_int(0, cfg.generator.steps - 1));
        Tape t(dm::GradMode::Disabled);
        const Var mu = rephead::posterior(t, model, cfg.head, pooled(t, model, ctx.feats[i])).mu;
        const generator::NoisyState noisy = generator::corrupt(m, cfg.generator, k, derive_seed(cfg.seed, "eval-noise", i));
        const generator::Prediction pred = generator::denoise(t, model, cfg.generator, t.constant(noisy.coords),
                                                              t.constant(noisy.atom_logits), k, mu, m.mask, ctx.gen_tap);
        total += generator::gen_loss(pred.coords, pred.logits, m, cfg.generator.vocab).value().item();
    }
    return n == 0 ? 0.0 : total / static_cast<double>(n);
}

std::string csv_row(const StepLosses& s) {
    auto opt = [](const std::optional<double>& v) { return v ? detail::fmt(*v) : std::string(); };
    return std::to_string(s.step) + ',' + detail::fmt(s.gen) + ',' + opt(s.kl) + ',' + opt(s.perc) + ',' + opt(s.repa) +
           ',' + detail::fmt(s.total);
}

constexpr const char* kLossHeader = "step,l_gen,l_kl,l_perc,l_repa,total";

// Rows of an earlier loss file that precede `start`, so a resumed run
// continues the same file.
std::vector<std::string> kept_rows(const std::filesystem::path& path, std::int64_t start) {
    std::vector<std::string> rows;
    std::ifstream is(path);
    std::string line;
    if (!std::getline(is, line)) return rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (std::stoll(line.substr(0, line.find(','))) < start) rows.push_back(line);
    }
    return rows;
}

ParamStore with_optimizer(const ParamStore& model, const dm::Adam& adam) {
    ParamStore out = model;
    adam.export_state(out);
    return out;
}

TrainOutcome run_training(const RunConfig& cfg, Mode mode, const std::optional<std::filesystem::path>& resume) {
    validate(cfg);
    detail::Stopwatch clock;
    const bool full = mode == Mode::Full;
    const std::string phase = full ? "train" : "train-baseline";
    const char* ckpt_name = full ? files::kPhase1 : files::kBaseline;
    const char* loss_name = full ? files::kPhase1Loss : files::kBaselineLoss;

    Context ctx(cfg);
    ctx.data = detail::load_data(cfg, ctx.manifest);
    ctx.enc = detail::load_encoder(cfg, ctx.manifest);
    const auto enc_bytes = ctx.enc.serialize();
    const std::string enc_hash = ctx.manifest.recorded_hash("pretrain-encoder");
    ctx.enc_tap = objectives::resolve_encoder_layer(cfg.repa, cfg.encoder.layers) - 1;
    ctx.gen_tap = objectives::resolve_generator_layer(cfg.repa, cfg.generator.depth);
    ctx.train = ctx.data.train;
    if (ctx.train.empty()) throw ConfigError("training split is empty");
    for (std::size_t idx : ctx.train) ctx.feats.push_back(encoder::encode(ctx.data.molecules[idx], ctx.enc, cfg.encoder));

    ParamStore model = init_model(cfg);
    dm::Adam adam(dm::AdamConfig{.lr = cfg.train.lr});
    std::int64_t start = 0;
    if (resume) {
        ParamStore saved = ParamStore::load(*resume);
        ParamStore restored;
        for (const auto& [name, e] : saved.entries())
            if (name.rfind("optim.", 0) != 0) restored.add(name, e.value, e.trainable);
        if (restored.names() != model.names()) {
            throw CheckpointError(resume->string() + " does not hold the parameters this config builds");
        }
        model = std::move(restored);
        adam.import_state(saved.extract("optim."));
        start = adam.steps();
        detail::log(phase + ": resuming from " + resume->string() + " at step " + std::to_string(start));
    }

    const std::size_t batch = cfg.train.batch_size;
    const std::int64_t per_epoch = static_cast<std::int64_t>((ctx.train.size() + batch - 1) / batch);
    std::int64_t stop = per_epoch * cfg.train.epochs;
    if (cfg.train.max_steps > 0) stop = std::min<std::int64_t>(stop, cfg.train.max_steps);

    TrainOutcome out;
    out.initial_l_gen = eval_l_gen(ctx, model);
    detail::log(phase + ": " + std::to_string(ctx.train.size()) + " molecules, steps " + std::to_string(start) + ".." +
                std::to_string(stop) + ", eval l_gen " + detail::fmt(out.initial_l_gen));

    const auto dir = cfg.out_dir();
    std::filesystem::create_directories(dir);
    const auto loss_path = dir / loss_name;
    const std::vector<std::string> earlier = resume ? kept_rows(loss_path, start) : std::vector<std::string>{};
    std::ofstream loss_csv(loss_path, std::ios::trunc);
    loss_csv << kLossHeader << '\n';
    for (const auto& row : earlier) loss_csv << row << '\n';

    std::vector<std::size_t> order(ctx.train.size());
    std::int64_t order_epoch = -1;
    for (std::int64_t step = start; step < stop; ++step) {
        const std::int64_t epoch = step / per_epoch;
        if (epoch != order_epoch) {
            std::iota(order.begin(), order.end(), 0);
            Rng shuffle(derive_seed(cfg.seed, "data-order", static_cast<std::uint64_t>(epoch)));
            std::shuffle(order.begin(), order.end(), shuffle.engine());
            order_epoch = epoch;
        }
        const std::size_t lo = static_cast<std::size_t>(step % per_epoch) * batch;
        const std::size_t hi = std::min(order.size(), lo + batch);
        const double inv = 1.0 / static_cast<double>(hi - lo);

        StepLosses s;
        s.step = step;
        model.zero_grad();
        for (std::size_t b = lo; b < hi; ++b) {
            const std::size_t i = order[b];
            const Molecule& m = ctx.data.molecules[ctx.train[i]];
            const Draw d = training_draw(cfg, static_cast<std::uint64_t>(step) * batch + (b - lo));
            Tape t;
            MolLoss ml;
            try {
                ml = full ? full_loss(t, ctx, model, m, ctx.feats[i], d, step)
                            : baseline_loss(t, ctx, model, m, ctx.feats[i], d);
            } catch (const NumericError& e) {
                loss_csv.flush();
                throw NumericError(phase + " step " + std::to_string(step) + ", molecule " +
                                   std::to_string(ctx.train[i]) + ": " + e.what());
            }
            t.backward(dm::scale(ml.total, inv));
            t.write_param_grads(model);
            s.gen += inv * ml.gen;
            s.total += inv * ml.total.value().item();
            auto acc = [&](std::optional<double>& into, const std::optional<double>& v) {
                if (v) into = into.value_or(0.0) + inv * *v;
            };
            acc(s.kl, ml.kl);
            acc(s.perc, ml.perc);
            acc(s.repa, ml.repa);
        }
        adam.step(model);
        loss_csv << csv_row(s) << '\n';
        out.trace.push_back(s);

        const std::int64_t done = step + 1;
        if (cfg.train.checkpoint_every > 0 && done % cfg.train.checkpoint_every == 0 && done < stop) {
            const auto path = dir / "checkpoints" / (phase + "_step" + std::to_string(done) + ".ckpt");
            detail::save_checkpoint(with_optimizer(model, adam), path);
            loss_csv.flush();
            detail::log(phase + ": step " + std::to_string(done) + " l_gen " + detail::fmt(s.gen) + " checkpoint " +
                        path.filename().string());
        } else if (done % per_epoch == 0) {
            detail::log(phase + ": epoch " + std::to_string(done / per_epoch) + " step " + std::to_string(done) +
                        " l_gen " + detail::fmt(s.gen) + " total " + detail::fmt(s.total));
        }
    }
    loss_csv.close();

    if (ctx.enc.serialize() != enc_bytes) throw ContractError("frozen encoder changed during " + phase);
    out.final_l_gen = eval_l_gen(ctx, model);
    out.steps_done = adam.steps();

    const auto ckpt = dir / ckpt_name;
    const std::string hash = detail::save_checkpoint(with_optimizer(model, adam), ckpt);
    const std::string enc_after = sha256_file(dir / files::kEncoder);
    if (enc_after != enc_hash) throw ContractError("encoder checkpoint file changed during " + phase);

    detail::record_config(ctx.manifest, cfg);
    nlohmann::json& rec = ctx.manifest.phase(phase);
    rec = nlohmann::json::object();
    rec["checkpoint"] = ckpt_name;
    rec["sha256"] = hash;
    rec["encoder_sha256"] = enc_hash;
    rec["encoder_sha256_after"] = enc_after;
    rec["loss_csv"] = loss_name;
    rec["loss_csv_sha256"] = sha256_file(loss_path);
    rec["steps"] = out.steps_done;
    rec["initial_l_gen"] = out.initial_l_gen;
    rec["final_l_gen"] = out.final_l_gen;
    rec["wall_seconds"] = clock.seconds();
    if (resume) rec["resumed_from"] = resume->string();
    ctx.manifest.save();
    detail::log(phase + ": done, eval l_gen " + detail::fmt(out.initial_l_gen) + " -> " + detail::fmt(out.final_l_gen) +
                " in " + detail::fmt(clock.seconds()) + " s");
    return out;
}

} // namespace

TrainOutcome phase1_train(const RunConfig& cfg, const std::optional<std::filesystem::path>& resume) {
    return run_training(cfg, Mode::Full, resume);
}

TrainOutcome baseline_train(const RunConfig& cfg) { return run_training(cfg, Mode::Baseline, std::nullopt); }

} // namespace repcond::pipeline
