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

// Command-line driver for the three training phases and the diagnostics.

#include <exception>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "repcond/diffmath/runtime.hpp"
#include "repcond/errors.hpp"
#include "repcond/pipeline/config.hpp"
#include "repcond/pipeline/phases.hpp"

namespace rp = repcond::pipeline;

namespace {

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kNumeric = 3, kCheckpoint = 4 };

const char* error_name(const std::exception& e) {
    if (dynamic_cast<const repcond::ConfigError*>(&e)) return "ConfigError";
    if (dynamic_cast<const repcond::NumericError*>(&e)) return "NumericError";
    if (dynamic_cast<const repcond::CheckpointError*>(&e)) return "CheckpointError";
    if (dynamic_cast<const repcond::ParseError*>(&e)) return "ParseError";
    if (dynamic_cast<const repcond::ValidationError*>(&e)) return "ValidationError";
    if (dynamic_cast<const repcond::ParameterError*>(&e)) return "ParameterError";
    if (dynamic_cast<const repcond::ContractError*>(&e)) return "ContractError";
    if (dynamic_cast<const repcond::DimensionError*>(&e)) return "DimensionError";
    if (dynamic_cast<const repcond::Error*>(&e)) return "Error";
    return "error";
}

int exit_code(const std::exception& e) {
    if (dynamic_cast<const repcond::ConfigError*>(&e)) return kConfig;
    if (dynamic_cast<const repcond::NumericError*>(&e)) return kNumeric;
    if (dynamic_cast<const repcond::CheckpointError*>(&e)) return kCheckpoint;
    return kOther;
}

std::vector<int> parse_steps(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(part, &used));
            if (used != part.size()) throw std::invalid_argument(part);
        } catch (const std::exception&) {
            throw repcond::ConfigError("--steps expects a comma-separated list of integers, got '" + text + "'");
        }
    }
    if (out.empty()) throw repcond::ConfigError("--steps is empty");
    return out;
}

} // namespace

int main(int argc, char** argv) {
    repcond::diffmath::retain_heap();

    // Dotted options (--loss.lambda_perc=0.005) are config overrides; pull
    // them out before CLI11 sees the command line.
    std::vector<std::string> overrides;
    std::vector<char*> args{argv[0]};
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        const auto eq = a.find('=');
        if (a.rfind("--", 0) == 0 && a.substr(2, eq == std::string::npos ? std::string::npos : eq - 2).find('.') != std::string::npos) {
            if (eq == std::string::npos) {
                if (i + 1 >= argc) {
                    std::cerr << "error: ConfigError: override " << a << " needs a value\n";
                    return kConfig;
                }
                overrides.push_back(a.substr(2) + "=" + argv[++i]);
            } else {
                overrides.push_back(a.substr(2));
            }
        } else {
            args.push_back(argv[i]);
        }
    }

    CLI::App app{"Representation-conditioned toy molecule generation"};
    app.require_subcommand(1);
    std::string config_path, out_dir;
    std::int64_t seed = -1;
    std::vector<std::string> sets;
    bool quiet = false;
    app.add_option("-c,--config", config_path, "JSON config file (a run manifest also works)");
    app.add_option("-o,--out", out_dir, "output directory");
    app.add_option("--set", sets, "config override key.path=value (repeatable)");
    app.add_flag("-q,--quiet", quiet, "no progress lines");

    auto* synth = app.add_subcommand("synth-data", "write the synthetic dataset");
    auto* pretrain = app.add_subcommand("pretrain-encoder", "denoising pretraining of the encoder");
    auto* train = app.add_subcommand("train", "phase I: generator, head and projection");
    std::string resume;
    bool baseline = false;
    train->add_option("--resume", resume, "checkpoint to resume from");
    train->add_flag("--baseline", baseline, "plain conditional generator (l_gen only, z = mu)");
    auto* train_rdm = app.add_subcommand("train-rdm", "phase II: diffusion model over head means");
    auto* sample = app.add_subcommand("sample", "phase III: sample molecules");
    std::int64_t n = -1, atoms = -1;
    std::string steps;
    sample->add_option("--n", n, "number of molecules");
    sample->add_option("--steps", steps, "reverse steps, comma-separated for a sweep");
    sample->add_option("--atoms", atoms, "fixed atom count (0: training histogram)");
    sample->add_option("--seed", seed, "sampling seed");
    auto* diag = app.add_subcommand("diagnose", "representation geometry, probes, pooling weights");
    std::string matrix;
    diag->add_option("--matrix", matrix, "geometry of an external REPM1 or CSV matrix instead");
    auto* probe = app.add_subcommand("probe", "per-layer motif probes of the frozen encoder");
    auto* report = app.add_subcommand("report", "markdown summary of the run");
    auto* all = app.add_subcommand("all", "every phase in order");

    try {
        app.parse(static_cast<int>(args.size()), args.data());
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        nlohmann::json j = config_path.empty() ? rp::to_json(rp::RunConfig{}) : rp::to_json(rp::load_config(config_path));
        if (!out_dir.empty()) j["out"] = out_dir;
        for (const auto& s : sets) overrides.push_back(s);
        for (const auto& o : overrides) rp::apply_override(j, o);
        if (*sample) {
            if (n >= 0) j["sample"]["n"] = n;
            if (atoms >= 0) j["sample"]["atoms"] = atoms;
            if (seed >= 0) j["sample"]["seed"] = seed;
            if (!steps.empty()) j["sample"]["steps"] = parse_steps(steps);
        }
        const rp::RunConfig cfg = rp::from_json(j);
        rp::validate(cfg);
        if (quiet) rp::set_log(nullptr);

        if (*synth || *all) rp::synth_data(cfg);
        if (*pretrain || *all) rp::pretrain_encoder(cfg);
        if (*train || *all) {
            if (baseline) rp::baseline_train(cfg);
            else rp::phase1_train(cfg, resume.empty() ? std::nullopt : std::optional<std::filesystem::path>(resume));
        }
        if (*train_rdm || *all) rp::phase2_train(cfg);
        if (*sample || *all) {
            for (const auto& row : rp::phase3_sample(cfg)) std::cout << row.file.string() << '\n';
        }
        if (*diag || *all) {
            if (!matrix.empty()) {
                const auto r = rp::external_geometry(cfg, matrix);
                std::cout << "effective_rank " << r.effective_rank << " pairwise_mean " << r.pairwise.mean
                          << " knn_avg_distance " << r.knn_avg_distance << '\n';
            } else {
                rp::diagnose(cfg);
            }
        }
        if (*probe) rp::probe(cfg);
        if (*report || *all) std::cout << rp::report(cfg).string() << '\n';
    } catch (const std::exception& e) {
        std::cerr << "error: " << error_name(e) << ": " << e.what() << '\n';
        return exit_code(e);
    }
    return kOk;
}
