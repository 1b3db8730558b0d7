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

#include "repcond/pipeline/config.hpp"

#include <fstream>

#include "repcond/errors.hpp"

namespace repcond::pipeline {

using nlohmann::json;

std::filesystem::path RunConfig::dataset_path() const {
    return data.path.empty() ? out_dir() / "dataset.jsonl" : std::filesystem::path(data.path);
}

void validate(const RunConfig& cfg) {
    try {
        encoder::validate(cfg.encoder);
        rephead::validate(cfg.head);
        generator::validate(cfg.generator);
        objectives::validate(cfg.loss);
        rdm::validate(cfg.rdm);
        objectives::resolve_encoder_layer(cfg.repa, cfg.encoder.layers);
        objectives::resolve_generator_layer(cfg.repa, cfg.generator.depth);
    } catch (const ParameterError& e) {
        throw ConfigError(e.what());
    }
    if (cfg.generator.vocab != cfg.encoder.vocab) throw ConfigError("generator.vocab must equal encoder.vocab");
    if (cfg.generator.latent_dim != cfg.head.latent_dim) throw ConfigError("generator.latent_dim must equal head.latent_dim");
    if (cfg.data.max_atoms < 3) throw ConfigError("data.max_atoms must be at least 3");
    if (cfg.data.max_atoms > cfg.rdm.max_atom_count) throw ConfigError("data.max_atoms exceeds rdm.max_atom_count");
    if (cfg.data.count < 10) throw ConfigError("data.count must be at least 10");
    if (cfg.train.epochs < 1 || cfg.train.batch_size < 1 || !(cfg.train.lr > 0)) {
        throw ConfigError("train needs epochs >= 1, batch_size >= 1 and lr > 0");
    }
    if (cfg.train.max_steps < 0 || cfg.train.checkpoint_every < 0) {
        throw ConfigError("train.max_steps and train.checkpoint_every must be >= 0");
    }
    if (cfg.pretrain.epochs < 1 || cfg.pretrain.batch_size < 1) throw ConfigError("pretrain needs epochs >= 1 and batch_size >= 1");
    if (cfg.rdm_train.epochs < 1 || cfg.rdm_train.batch_size < 1) throw ConfigError("rdm_train needs epochs >= 1 and batch_size >= 1");
    for (int s : cfg.sample.steps) {
        if (s < 1 || s > cfg.generator.steps) {
            throw ConfigError("sample.steps entries must lie in [1, generator.steps], got " + std::to_string(s));
        }
    }
    if (cfg.sample.atoms < 0 || cfg.sample.atoms > cfg.rdm.max_atom_count) throw ConfigError("sample.atoms out of range");
    if (cfg.diag.lipschitz_probes < 1 || !(cfg.diag.epsilon > 0) || cfg.diag.knn_k < 1) {
        throw ConfigError("diag needs lipschitz_probes >= 1, epsilon > 0 and knn_k >= 1");
    }
    if (cfg.out.empty()) throw ConfigError("out must name a directory");
}

json to_json(const RunConfig& c) {
    return json{
        {"seed", c.seed},
        {"out", c.out},
        {"data", {{"path", c.data.path}, {"count", c.data.count}, {"max_atoms", c.data.max_atoms}}},
        {"encoder",
         {{"layers", c.encoder.layers},
          {"dim", c.encoder.dim},
          {"vocab", c.encoder.vocab},
          {"message_hidden", c.encoder.message_hidden},
          {"cutoff", c.encoder.cutoff},
          {"sigma_pre", c.encoder.sigma_pre}}},
        {"pretrain", {{"epochs", c.pretrain.epochs}, {"batch_size", c.pretrain.batch_size}, {"lr", c.pretrain.lr}}},
        {"head", {{"latent_dim", c.head.latent_dim}, {"v_min", c.head.v_min}, {"v_max", c.head.v_max}}},
        {"generator",
         {{"depth", c.generator.depth},
          {"dim", c.generator.dim},
          {"steps", c.generator.steps},
          {"vocab", c.generator.vocab},
          {"latent_dim", c.generator.latent_dim}}},
        {"loss",
         {{"lambda_kl", c.loss.lambda_kl},
          {"lambda_perc", c.loss.lambda_perc},
          {"lambda_repa", c.loss.lambda_repa},
          {"w_min", c.loss.w_min},
          {"w_max", c.loss.w_max}}},
        {"repa", {{"encoder_layer", c.repa.encoder_layer}, {"generator_layer", c.repa.generator_layer}}},
        {"train",
         {{"epochs", c.train.epochs},
          {"batch_size", c.train.batch_size},
          {"lr", c.train.lr},
          {"checkpoint_every", c.train.checkpoint_every},
          {"max_steps", c.train.max_steps},
          {"bypass_head", c.train.bypass_head},
          {"eval_molecules", c.train.eval_molecules}}},
        {"rdm",
         {{"steps", c.rdm.steps},
          {"hidden", c.rdm.hidden},
          {"embed_dim", c.rdm.embed_dim},
          {"max_atom_count", c.rdm.max_atom_count},
          {"count_dropout", c.rdm.count_dropout},
          {"clip", c.rdm.clip}}},
        {"rdm_train", {{"epochs", c.rdm_train.epochs}, {"batch_size", c.rdm_train.batch_size}, {"lr", c.rdm_train.lr}}},
        {"sample", {{"n", c.sample.n}, {"steps", c.sample.steps}, {"atoms", c.sample.atoms}, {"seed", c.sample.seed}}},
        {"diag",
         {{"molecules", c.diag.molecules},
          {"epsilon", c.diag.epsilon},
          {"lipschitz_probes", c.diag.lipschitz_probes},
          {"knn_k", c.diag.knn_k},
          {"probe",
           {{"train_fraction", c.diag.probe.train_fraction},
            {"iterations", c.diag.probe.iterations},
            {"lr", c.diag.probe.lr},
            {"l2", c.diag.probe.l2},
            {"split_seed", c.diag.probe.split_seed}}}}},
    };
}

namespace {

void check_keys(const json& given, const json& known, const std::string& prefix) {
    for (auto it = given.begin(); it != given.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!known.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
        const json& k = known.at(it.key());
        if (k.is_object()) {
            if (!it->is_object()) throw ConfigError("config key '" + key + "' must be an object");
            check_keys(*it, k, key);
        }
    }
}

template <class T>
void read(const json& j, const char* key, T& out) {
    j.at(key).get_to(out);
}

} // namespace

RunConfig from_json(const json& given) {
    if (!given.is_object()) throw ConfigError("config must be a JSON object");
    const RunConfig defaults;
    json j = to_json(defaults);
    check_keys(given, j, "");
    j.merge_patch(given);
    RunConfig c;
    try {
        read(j, "seed", c.seed);
        read(j, "out", c.out);
        const json& d = j["data"];
        read(d, "path", c.data.path);
        read(d, "count", c.data.count);
        read(d, "max_atoms", c.data.max_atoms);
        const json& e = j["encoder"];
        read(e, "layers", c.encoder.layers);
        read(e, "dim", c.encoder.dim);
        read(e, "vocab", c.encoder.vocab);
        read(e, "message_hidden", c.encoder.message_hidden);
        read(e, "cutoff", c.encoder.cutoff);
        read(e, "sigma_pre", c.encoder.sigma_pre);
        const json& p = j["pretrain"];
        read(p, "epochs", c.pretrain.epochs);
        read(p, "batch_size", c.pretrain.batch_size);
        read(p, "lr", c.pretrain.lr);
        const json& h = j["head"];
        read(h, "latent_dim", c.head.latent_dim);
        read(h, "v_min", c.head.v_min);
        read(h, "v_max", c.head.v_max);
        const json& g = j["generator"];
        read(g, "depth", c.generator.depth);
        read(g, "dim", c.generator.dim);
        read(g, "steps", c.generator.steps);
        read(g, "vocab", c.generator.vocab);
        read(g, "latent_dim", c.generator.latent_dim);
        const json& l = j["loss"];
        read(l, "lambda_kl", c.loss.lambda_kl);
        read(l, "lambda_perc", c.loss.lambda_perc);
        read(l, "lambda_repa", c.loss.lambda_repa);
        read(l, "w_min", c.loss.w_min);
        read(l, "w_max", c.loss.w_max);
        read(j["repa"], "encoder_layer", c.repa.encoder_layer);
        read(j["repa"], "generator_layer", c.repa.generator_layer);
        const json& t = j["train"];
        read(t, "epochs", c.train.epochs);
        read(t, "batch_size", c.train.batch_size);
        read(t, "lr", c.train.lr);
        read(t, "checkpoint_every", c.train.checkpoint_every);
        read(t, "max_steps", c.train.max_steps);
        read(t, "bypass_head", c.train.bypass_head);
        read(t, "eval_molecules", c.train.eval_molecules);
        const json& r = j["rdm"];
        read(r, "steps", c.rdm.steps);
        read(r, "hidden", c.rdm.hidden);
        read(r, "embed_dim", c.rdm.embed_dim);
        read(r, "max_atom_count", c.rdm.max_atom_count);
        read(r, "count_dropout", c.rdm.count_dropout);
        read(r, "clip", c.rdm.clip);
        const json& rt = j["rdm_train"];
        read(rt, "epochs", c.rdm_train.epochs);
        read(rt, "batch_size", c.rdm_train.batch_size);
        read(rt, "lr", c.rdm_train.lr);
        const json& s = j["sample"];
        read(s, "n", c.sample.n);
        read(s, "steps", c.sample.steps);
        read(s, "atoms", c.sample.atoms);
        read(s, "seed", c.sample.seed);
        const json& dg = j["diag"];
        read(dg, "molecules", c.diag.molecules);
        read(dg, "epsilon", c.diag.epsilon);
        read(dg, "lipschitz_probes", c.diag.lipschitz_probes);
        read(dg, "knn_k", c.diag.knn_k);
        const json& pr = dg["probe"];
        read(pr, "train_fraction", c.diag.probe.train_fraction);
        read(pr, "iterations", c.diag.probe.iterations);
        read(pr, "lr", c.diag.probe.lr);
        read(pr, "l2", c.diag.probe.l2);
        read(pr, "split_seed", c.diag.probe.split_seed);
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("bad config value: ") + ex.what());
    }
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    if (j.is_object() && j.contains("phases") && j.contains("config")) j = j["config"];
    return from_json(j);
}

void apply_override(json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value: " + assignment);
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("empty component in override key " + key);
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        if (!node->is_null() && !node->is_object()) throw ConfigError("override key " + key + " descends into a non-object");
        start = dot + 1;
    }
}

} // namespace repcond::pipeline
