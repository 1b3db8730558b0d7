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
#include <limits>
#include <map>

#include "internal.hpp"
#include "repcond/diagnostics/diagnostics.hpp"
#include "repcond/errors.hpp"
#include "repcond/generator/generator.hpp"
#include "repcond/molkit/dataset.hpp"
#include "repcond/pipeline/phases.hpp"
#include "repcond/rdm/rdm.hpp"
#include "repcond/rephead/rephead.hpp"
#include "repcond/rng.hpp"

namespace repcond::pipeline {

namespace dm = diffmath;
using dm::ParamStore;
using molkit::Molecule;

DataOutcome synth_data(const RunConfig& cfg) {
    validate(cfg);
    detail::Stopwatch clock;
    molkit::SynthConfig sc;
    sc.count = cfg.data.count;
    sc.max_atoms = cfg.data.max_atoms;
    sc.vocab = cfg.encoder.vocab;
    sc.seed = derive_seed(cfg.seed, "data");
    const molkit::Dataset d = molkit::synthesize_dataset(sc);
    DataOutcome out{cfg.dataset_path(), d.molecules.size()};
    if (out.path.has_parent_path()) std::filesystem::create_directories(out.path.parent_path());
    molkit::save_dataset(d, out.path);

    Manifest manifest = Manifest::open(cfg.out_dir());
    detail::record_config(manifest, cfg);
    auto& rec = manifest.phase("synth-data");
    rec = nlohmann::json::object();
    rec["file"] = cfg.data.path.empty() ? out.path.filename().string() : out.path.string();
    rec["sha256"] = sha256_file(out.path);
    rec["molecules"] = out.molecules;
    rec["splits"] = {{"train", d.train.size()}, {"val", d.val.size()}, {"test", d.test.size()}};
    rec["wall_seconds"] = clock.seconds();
    manifest.save();
    detail::log("synth-data: " + std::to_string(out.molecules) + " molecules -> " + out.path.string());
    return out;
}

PretrainOutcome pretrain_encoder(const RunConfig& cfg) {
    validate(cfg);
    detail::Stopwatch clock;
    Manifest manifest = Manifest::open(cfg.out_dir());
    const molkit::Dataset data = detail::load_data(cfg, manifest);
    encoder::PretrainOptions opts = cfg.pretrain;
    opts.seed = derive_seed(cfg.seed, "pretrain");
    detail::log("pretrain-encoder: " + std::to_string(data.train.size()) + " molecules, " + std::to_string(opts.epochs) +
                " epochs");
    encoder::PretrainResult res = encoder::pretrain_denoising(data, cfg.encoder, opts);
    const auto path = cfg.out_dir() / files::kEncoder;
    const std::string hash = detail::save_checkpoint(res.params, path);

    detail::record_config(manifest, cfg);
    auto& rec = manifest.phase("pretrain-encoder");
    rec = nlohmann::json::object();
    rec["checkpoint"] = files::kEncoder;
    rec["sha256"] = hash;
    rec["dataset_sha256"] = sha256_file(cfg.dataset_path());
    rec["initial_loss"] = res.initial_loss;
    rec["final_loss"] = res.final_loss;
    rec["epoch_losses"] = res.epoch_losses;
    rec["wall_seconds"] = clock.seconds();
    manifest.save();
    detail::log("pretrain-encoder: loss " + detail::fmt(res.initial_loss) + " -> " + detail::fmt(res.final_loss));
    return {res.initial_loss, res.final_loss, res.epoch_losses};
}

RdmOutcome phase2_train(const RunConfig& cfg) {
    validate(cfg);
    detail::Stopwatch clock;
    Manifest manifest = Manifest::open(cfg.out_dir());
    RdmOutcome out;
    out.phase1_sha256 = manifest.recorded_hash("train");
    ParamStore model = detail::load_checked(cfg, manifest, "train", files::kPhase1);
    ParamStore enc = detail::load_encoder(cfg, manifest);
    const molkit::Dataset data = detail::load_data(cfg, manifest);

    const std::size_t m = data.train.size();
    const std::size_t dz = static_cast<std::size_t>(cfg.head.latent_dim);
    Array latents(dm::Shape{m, dz});
    std::vector<int> counts;
    for (std::size_t r = 0; r < m; ++r) {
        const Molecule& mol = data.molecules[data.train[r]];
        const auto post = rephead::encode_posterior(encoder::encode(mol, enc, cfg.encoder), model, cfg.head);
        if (!post.mu.all_finite()) {
            throw NumericError("non-finite mu for molecule " + std::to_string(data.train[r]));
        }
        for (std::size_t c = 0; c < dz; ++c) latents.at(r, c) = post.mu[c];
        counts.push_back(static_cast<int>(mol.valid_count()));
    }
    diagnostics::write_repm(cfg.out_dir() / files::kLatents, latents);

    out.min_latent_std = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < dz; ++c) {
        double mean = 0, ss = 0;
        for (std::size_t r = 0; r < m; ++r) mean += latents.at(r, c);
        mean /= static_cast<double>(m);
        for (std::size_t r = 0; r < m; ++r) ss += std::pow(latents.at(r, c) - mean, 2);
        out.min_latent_std = std::min(out.min_latent_std, std::sqrt(ss / static_cast<double>(m)));
    }
    out.collapse_warning = out.min_latent_std < 1e-6;
    if (out.collapse_warning) {
        detail::log("warning: posterior collapse: smallest per-dimension std of mu over the training split is " +
                    detail::fmt(out.min_latent_std));
    }

    rdm::TrainOptions opts = cfg.rdm_train;
    opts.seed = derive_seed(cfg.seed, "rdm");
    detail::log("train-rdm: " + std::to_string(m) + " latents of width " + std::to_string(dz));
    const rdm::TrainResult res = rdm::train_rdm(latents, counts, cfg.rdm, opts);
    out.initial_loss = res.initial_loss;
    out.final_loss = res.final_loss;
    const auto path = cfg.out_dir() / files::kRdm;
    const std::string hash = detail::save_checkpoint(res.params, path);
    {
        std::ofstream os(cfg.out_dir() / files::kRdmLoss);
        os << "epoch,loss\n";
        for (std::size_t e = 0; e < res.epoch_losses.size(); ++e) os << e << ',' << detail::fmt(res.epoch_losses[e]) << '\n';
    }
    if (sha256_file(cfg.out_dir() / files::kPhase1) != out.phase1_sha256) {
        throw ContractError("phase-1 checkpoint changed during train-rdm");
    }

    detail::record_config(manifest, cfg);
    auto& rec = manifest.phase("train-rdm");
    rec = nlohmann::json::object();
    rec["checkpoint"] = files::kRdm;
    rec["sha256"] = hash;
    rec["phase1_sha256"] = out.phase1_sha256;
    rec["latents"] = files::kLatents;
    rec["latents_sha256"] = sha256_file(cfg.out_dir() / files::kLatents);
    rec["collapse_warning"] = out.collapse_warning;
    rec["min_latent_std"] = out.min_latent_std;
    rec["initial_loss"] = res.initial_loss;
    rec["final_loss"] = res.final_loss;
    rec["loss_csv"] = files::kRdmLoss;
    rec["wall_seconds"] = clock.seconds();
    manifest.save();
    detail::log("train-rdm: eps loss " + detail::fmt(res.initial_loss) + " -> " + detail::fmt(res.final_loss));
    return out;
}

namespace {

double mean_nn_distance(const Molecule& m) {
    double total = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (!m.mask[i]) continue;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < m.size(); ++j) {
            if (j == i || !m.mask[j]) continue;
            double d = 0;
            for (std::size_t c = 0; c < 3; ++c) d += std::pow(m.coords.at(i, c) - m.coords.at(j, c), 2);
            best = std::min(best, std::sqrt(d));
        }
        if (std::isfinite(best)) {
            total += best;
            ++n;
        }
    }
    return n == 0 ? std::nan("") : total / static_cast<double>(n);
}

std::vector<double> type_histogram(const std::vector<const Molecule*>& mols, int vocab) {
    std::vector<double> h(static_cast<std::size_t>(vocab), 0.0);
    double total = 0;
    for (const Molecule* m : mols)
        for (std::size_t i = 0; i < m->size(); ++i)
            if (m->mask[i]) {
                h[static_cast<std::size_t>(m->atoms[i])] += 1;
                total += 1;
            }
    if (total > 0)
        for (double& v : h) v /= total;
    return h;
}

} // namespace

std::vector<SampleRow> phase3_sample(const RunConfig& cfg) {
    validate(cfg);
    detail::Stopwatch total_clock;
    Manifest manifest = Manifest::open(cfg.out_dir());
    const std::string phase1_hash = manifest.recorded_hash("train");
    const std::string rdm_hash = manifest.recorded_hash("train-rdm");
    if (manifest.json()["phases"]["train-rdm"].value("phase1_sha256", "") != phase1_hash) {
        throw CheckpointError("rdm.ckpt was trained on a different phase-1 checkpoint than the one recorded");
    }
    ParamStore model = detail::load_checked(cfg, manifest, "train", files::kPhase1);
    ParamStore rdm_params = detail::load_checked(cfg, manifest, "train-rdm", files::kRdm);
    const molkit::Dataset data = detail::load_data(cfg, manifest);

    std::vector<int> hist_counts;
    std::vector<const Molecule*> train_mols;
    for (std::size_t idx : data.train) {
        hist_counts.push_back(static_cast<int>(data.molecules[idx].valid_count()));
        train_mols.push_back(&data.molecules[idx]);
    }
    const std::vector<double> train_types = type_histogram(train_mols, cfg.generator.vocab);

    const std::uint64_t seed = cfg.sample.seed < 0 ? cfg.seed : static_cast<std::uint64_t>(cfg.sample.seed);
    const std::size_t n = cfg.sample.n;
    std::vector<int> counts(n, cfg.sample.atoms);
    if (cfg.sample.atoms == 0) {
        if (hist_counts.empty()) throw ConfigError("training split is empty; pass --atoms");
        Rng r(derive_seed(seed, "sample-count"));
        for (auto& c : counts) c = hist_counts[static_cast<std::size_t>(r.uniform_int(0, static_cast<std::int64_t>(hist_counts.size()) - 1))];
    }
    const Array latents = n == 0 ? Array(dm::Shape{0, static_cast<std::size_t>(cfg.head.latent_dim)})
                                 : rdm::sample_rdm_batch(rdm_params, cfg.rdm, counts, derive_seed(seed, "rdm-sample"));

    std::vector<SampleRow> rows;
    nlohmann::json files_rec = nlohmann::json::array();
    for (int steps : cfg.sample.steps) {
        detail::Stopwatch clock;
        SampleRow row;
        row.steps = steps;
        row.n = n;
        row.file = cfg.out_dir() / ("samples_steps" + std::to_string(steps) + ".jsonl");
        std::ofstream os(row.file, std::ios::trunc);
        std::vector<Molecule> mols;
        generator::SampleOptions opts;
        opts.steps = steps;
        for (std::size_t i = 0; i < n; ++i) {
            Array z(dm::Shape{latents.cols()});
            for (std::size_t c = 0; c < latents.cols(); ++c) z[c] = latents.at(i, c);
            mols.push_back(generator::sample(z, static_cast<std::size_t>(counts[i]), model, cfg.generator,
                                             derive_seed(seed, "sample", i), opts));
            os << molkit::to_json_line(mols.back()) << '\n';
        }
        os.close();
        row.seconds = clock.seconds();
        if (n > 0) {
            double atoms = 0, nn = 0;
            std::size_t nn_count = 0;
            std::vector<const Molecule*> ptrs;
            for (const auto& m : mols) {
                atoms += static_cast<double>(m.valid_count());
                const double d = mean_nn_distance(m);
                if (std::isfinite(d)) {
                    nn += d;
                    ++nn_count;
                }
                ptrs.push_back(&m);
            }
            row.mean_atoms = atoms / static_cast<double>(n);
            row.mean_nn_distance = nn_count ? nn / static_cast<double>(nn_count) : std::nan("");
            const auto types = type_histogram(ptrs, cfg.generator.vocab);
            for (std::size_t k = 0; k < types.size(); ++k) row.atom_type_tv += 0.5 * std::abs(types[k] - train_types[k]);
        }
        files_rec.push_back({{"steps", steps},
                             {"file", row.file.filename().string()},
                             {"sha256", sha256_file(row.file)},
                             {"seconds", row.seconds}});
        detail::log("sample: " + std::to_string(n) + " molecules at " + std::to_string(steps) + " steps in " +
                    detail::fmt(row.seconds) + " s");
        rows.push_back(row);
    }

    const auto summary = cfg.out_dir() / files::kSampleSummary;
    {
        std::ofstream os(summary);
        os << "steps,n_samples,mean_atoms,mean_nn_distance,atom_type_tv,seconds\n";
        for (const auto& r : rows) {
            os << r.steps << ',' << r.n << ',';
            if (r.n > 0) os << detail::fmt(r.mean_atoms) << ',' << detail::fmt(r.mean_nn_distance) << ',' << detail::fmt(r.atom_type_tv);
            else os << ",,";
            os << ',' << detail::fmt(r.seconds) << '\n';
        }
    }
    detail::record_config(manifest, cfg);
    auto& rec = manifest.phase("sample");
    rec = nlohmann::json::object();
    rec["phase1_sha256"] = phase1_hash;
    rec["rdm_sha256"] = rdm_hash;
    rec["n"] = n;
    rec["seed"] = seed;
    rec["files"] = files_rec;
    rec["summary"] = files::kSampleSummary;
    rec["wall_seconds"] = total_clock.seconds();
    manifest.save();
    return rows;
}

} // namespace repcond::pipeline
