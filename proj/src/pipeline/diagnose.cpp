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

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "internal.hpp"
#include "repcond/diagnostics/diagnostics.hpp"
#include "repcond/diffmath/ops.hpp"
#include "repcond/errors.hpp"
#include "repcond/pipeline/phases.hpp"
#include "repcond/rephead/rephead.hpp"
#include "repcond/rng.hpp"

namespace repcond::pipeline {

namespace dm = diffmath;
namespace dg = diagnostics;
using dm::ParamStore;
using molkit::Molecule;

namespace {

dg::ProbeConfig probe_config(const RunConfig& cfg) {
    dg::ProbeConfig pc = cfg.diag.probe;
    pc.split_seed = derive_seed(cfg.seed, "diag", pc.split_seed);
    return pc;
}

// Every molecule of the dataset is probed; the probe holds out its own 20%.
dg::ProbeResult run_probes(const RunConfig& cfg, const molkit::Dataset& data, ParamStore& enc) {
    std::vector<encoder::LayerStack> stacks;
    for (const auto& m : data.molecules) stacks.push_back(encoder::encode(m, enc, cfg.encoder));
    const dg::ProbeConfig pc = probe_config(cfg);
    dg::ProbeResult res;
    res.motifs.assign(molkit::kMotifNames.begin(), molkit::kMotifNames.end());
    res.config = pc;
    for (std::size_t l = 0; l < static_cast<std::size_t>(cfg.encoder.layers); ++l) {
        const Array z = dg::layer_matrix(stacks, l);
        std::vector<double> row;
        for (const auto& motif : res.motifs) {
            std::vector<bool> y;
            for (const auto& m : data.molecules) y.push_back(m.motifs.at(motif));
            try {
                row.push_back(dg::linear_probe(z, y, pc).balanced_accuracy);
            } catch (const ParameterError& e) {
                if (l == 0) detail::log("probe: motif " + motif + " skipped: " + e.what());
                row.push_back(std::nan(""));
            }
        }
        res.accuracy.push_back(row);
    }
    return res;
}

std::string write_probe(const RunConfig& cfg, const dg::ProbeResult& res) {
    const auto path = cfg.out_dir() / files::kProbe;
    std::ofstream os(path);
    dg::write_probe_csv(os, res);
    os.close();
    return sha256_file(path);
}

nlohmann::json probe_record(const dg::ProbeResult& res, const std::string& hash) {
    return {{"file", files::kProbe},
            {"sha256", hash},
            {"split_seed", res.config.split_seed},
            {"train_fraction", res.config.train_fraction},
            {"iterations", res.config.iterations},
            {"lr", res.config.lr},
            {"l2", res.config.l2}};
}

nlohmann::json geometry_json(const dg::GeometryReport& r) {
    return {{"source", r.source},
            {"effective_rank", r.effective_rank},
            {"lipschitz_mean", r.lipschitz_mean},
            {"lipschitz_max", r.lipschitz_max},
            {"pairwise_mean", r.pairwise.mean},
            {"pairwise_std", r.pairwise.std},
            {"knn_k", r.knn_k},
            {"knn_avg_distance", r.knn_avg_distance}};
}

} // namespace

DiagnoseOutcome diagnose(const RunConfig& cfg) {
    validate(cfg);
    detail::Stopwatch clock;
    Manifest manifest = Manifest::open(cfg.out_dir());
    const std::string phase1_hash = manifest.recorded_hash("train");
    ParamStore model = detail::load_checked(cfg, manifest, "train", files::kPhase1);
    ParamStore enc = detail::load_encoder(cfg, manifest);
    const molkit::Dataset data = detail::load_data(cfg, manifest);

    std::vector<Molecule> mols = data.subset(data.test);
    if (cfg.diag.molecules > 0 && mols.size() > cfg.diag.molecules) mols.resize(cfg.diag.molecules);
    if (mols.size() < 3) throw ConfigError("diagnose needs at least 3 test molecules");

    DiagnoseOutcome out;
    out.molecules = mols.size();
    std::vector<encoder::LayerStack> stacks;
    for (const auto& m : mols) stacks.push_back(encoder::encode(m, enc, cfg.encoder));
    const std::size_t last = static_cast<std::size_t>(cfg.encoder.layers) - 1;
    const std::size_t dz = static_cast<std::size_t>(cfg.head.latent_dim);

    dg::RepMatrix raw{dg::layer_matrix(stacks, last), "raw_pooled_encoder"};
    dg::RepMatrix head{Array(dm::Shape{mols.size(), dz}), "head_mu"};
    for (std::size_t i = 0; i < mols.size(); ++i) {
        const auto post = rephead::encode_posterior(stacks[i], model, cfg.head);
        for (std::size_t c = 0; c < dz; ++c) head.data.at(i, c) = post.mu[c];
    }

    const dg::EncodeFn raw_fn = [&](const Molecule& m) { return encoder::encode(m, enc, cfg.encoder).graph_feats.back(); };
    const dg::EncodeFn head_fn = [&](const Molecule& m) {
        return rephead::encode_posterior(encoder::encode(m, enc, cfg.encoder), model, cfg.head).mu;
    };
    const std::uint64_t lip_seed = derive_seed(cfg.seed, "diag", 1);
    const auto lip_raw = dg::empirical_lipschitz(raw_fn, mols, cfg.diag.epsilon, cfg.diag.lipschitz_probes, lip_seed);
    const auto lip_head = dg::empirical_lipschitz(head_fn, mols, cfg.diag.epsilon, cfg.diag.lipschitz_probes, lip_seed);
    const int k = std::min<int>(cfg.diag.knn_k, static_cast<int>(mols.size()) - 1);
    out.raw = dg::geometry_report(raw, lip_raw, k);
    out.head = dg::geometry_report(head, lip_head, k);

    const auto dir = cfg.out_dir();
    nlohmann::json rec = nlohmann::json::object();
    auto record_file = [&](const char* key, const char* name) {
        rec[key] = {{"file", name}, {"sha256", sha256_file(dir / name)}};
    };
    {
        std::ofstream os(dir / files::kGeometry);
        dg::write_geometry_csv(os, {out.raw, out.head});
    }
    record_file("geometry", files::kGeometry);

    out.cross_layer = dg::cross_layer_similarity(stacks);
    {
        std::ofstream os(dir / files::kCrossLayer);
        os << "layer";
        for (std::size_t l = 0; l <= last; ++l) os << ",L" << l;
        os << '\n';
        for (std::size_t i = 0; i <= last; ++i) {
            os << 'L' << i;
            for (std::size_t j = 0; j <= last; ++j) os << ',' << detail::fmt(out.cross_layer.at(i, j));
            os << '\n';
        }
    }
    record_file("cross_layer", files::kCrossLayer);

    const Array alpha = dm::softmax(model.value("head.w_logits"));
    out.pooling_weights.assign(alpha.data().begin(), alpha.data().end());
    {
        std::ofstream os(dir / files::kPooling);
        os << "layer,alpha\n";
        for (std::size_t l = 0; l < out.pooling_weights.size(); ++l) os << 'L' << l << ',' << detail::fmt(out.pooling_weights[l]) << '\n';
    }
    record_file("pooling_weights", files::kPooling);

    out.probe = run_probes(cfg, data, enc);
    rec["probe"] = probe_record(out.probe, write_probe(cfg, out.probe));

    rec["phase1_sha256"] = phase1_hash;
    rec["molecules"] = out.molecules;
    rec["lipschitz_seed"] = lip_seed;
    rec["lipschitz_probes"] = cfg.diag.lipschitz_probes;
    rec["epsilon"] = cfg.diag.epsilon;
    rec["raw"] = geometry_json(out.raw);
    rec["head"] = geometry_json(out.head);
    rec["wall_seconds"] = clock.seconds();
    detail::record_config(manifest, cfg);
    manifest.phase("diagnose") = rec;
    manifest.save();
    detail::log("diagnose: lipschitz mean raw " + detail::fmt(out.raw.lipschitz_mean) + " head " +
                detail::fmt(out.head.lipschitz_mean) + "; effective rank raw " + detail::fmt(out.raw.effective_rank) +
                " head " + detail::fmt(out.head.effective_rank));
    return out;
}

dg::GeometryReport external_geometry(const RunConfig& cfg, const std::filesystem::path& matrix) {
    dg::RepMatrix z;
    z.data = matrix.extension() == ".csv" ? dg::read_rep_csv(matrix) : dg::read_repm(matrix);
    z.source = matrix.filename().string();
    dg::validate(z.data);
    dg::LipschitzResult none;
    none.max = none.mean = std::nan("");
    const int k = std::min<int>(cfg.diag.knn_k, static_cast<int>(z.data.rows()) - 1);
    const dg::GeometryReport r = dg::geometry_report(z, none, k);
    std::filesystem::create_directories(cfg.out_dir());
    std::ofstream os(cfg.out_dir() / "geometry_external.csv");
    dg::write_geometry_csv(os, {r});
    return r;
}

dg::ProbeResult probe(const RunConfig& cfg) {
    validate(cfg);
    Manifest manifest = Manifest::open(cfg.out_dir());
    ParamStore enc = detail::load_encoder(cfg, manifest);
    const molkit::Dataset data = detail::load_data(cfg, manifest);
    dg::ProbeResult res = run_probes(cfg, data, enc);
    nlohmann::json rec = probe_record(res, write_probe(cfg, res));
    rec["encoder_sha256"] = manifest.recorded_hash("pretrain-encoder");
    detail::record_config(manifest, cfg);
    manifest.phase("probe") = rec;
    manifest.save();
    return res;
}

namespace {

void csv_as_table(std::ostream& os, const std::filesystem::path& path) {
    std::ifstream is(path);
    std::string line;
    bool header = true;
    while (std::getline(is, line)) {
        std::string cells;
        std::size_t cols = 1;
        for (char c : line) {
            if (c == ',') {
                cells += " | ";
                ++cols;
            } else {
                cells += c;
            }
        }
        os << "| " << cells << " |\n";
        if (header) {
            os << '|';
            for (std::size_t i = 0; i < cols; ++i) os << " --- |";
            os << '\n';
            header = false;
        }
    }
    os << '\n';
}

} // namespace

std::filesystem::path report(const RunConfig& cfg) {
    const Manifest manifest = Manifest::open(cfg.out_dir());
    const auto& phases = manifest.json()["phases"];
    if (phases.empty()) throw Error("nothing to report: " + manifest.path().string() + " records no phases");
    const auto dir = cfg.out_dir();
    const auto path = dir / files::kReport;
    std::ofstream os(path);
    os << "# Run report\n\nSeed " << manifest.json().value("seed", std::uint64_t{0}) << ", output `" << dir.string() << "`.\n\n";
    os << "## Phases\n\n| phase | checkpoint / file | sha256 | seconds |\n| --- | --- | --- | --- |\n";
    for (auto it = phases.begin(); it != phases.end(); ++it) {
        const auto& p = it.value();
        const std::string file = p.contains("checkpoint") ? p["checkpoint"].get<std::string>()
                                                          : (p.contains("file") && p["file"].is_string() ? p["file"].get<std::string>() : "");
        os << "| " << it.key() << " | " << file << " | " << p.value("sha256", std::string("")).substr(0, 16) << " | "
           << std::fixed << std::setprecision(1) << p.value("wall_seconds", 0.0) << std::defaultfloat << " |\n";
    }
    os << '\n';
    if (phases.contains("pretrain-encoder")) {
        const auto& p = phases["pretrain-encoder"];
        os << "Encoder denoising loss: " << p["initial_loss"].get<double>() << " -> " << p["final_loss"].get<double>() << ".\n\n";
    }
    for (const char* name : {"train", "train-baseline"}) {
        if (!phases.contains(name)) continue;
        const auto& p = phases[name];
        os << "Phase `" << name << "`: " << p["steps"].get<std::int64_t>() << " steps, evaluation l_gen "
           << p["initial_l_gen"].get<double>() << " -> " << p["final_l_gen"].get<double>() << ".\n\n";
    }
    if (phases.contains("train-rdm")) {
        const auto& p = phases["train-rdm"];
        os << "RDM: loss " << p["initial_loss"].get<double>() << " -> " << p["final_loss"].get<double>()
           << ", smallest latent std " << p["min_latent_std"].get<double>()
           << (p["collapse_warning"].get<bool>() ? " (posterior collapse warning)" : "") << ".\n\n";
    }
    const std::pair<const char*, const char*> tables[] = {{"Sampling", files::kSampleSummary},
                                                          {"Representation geometry", files::kGeometry},
                                                          {"Linear probes (balanced accuracy)", files::kProbe},
                                                          {"Layer pooling weights", files::kPooling},
                                                          {"Cross-layer cosine similarity", files::kCrossLayer}};
    for (const auto& [title, file] : tables) {
        if (!std::filesystem::exists(dir / file)) continue;
        os << "## " << title << "\n\n";
        csv_as_table(os, dir / file);
    }
    return path;
}

} // namespace repcond::pipeline
