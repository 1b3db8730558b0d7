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

#include "repcond/pipeline/manifest.hpp"

#include <array>
#include <cstdio>
#include <fstream>

#include <openssl/evp.h>

#include "repcond/errors.hpp"

namespace repcond::pipeline {

namespace {

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new()) {
        if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 init failed");
    }
    ~Sha256() { EVP_MD_CTX_free(ctx_); }
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(const char* data, std::size_t n) {
        if (EVP_DigestUpdate(ctx_, data, n) != 1) throw Error("SHA-256 update failed");
    }
    std::string hex() {
        std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx_, md.data(), &len) != 1) throw Error("SHA-256 final failed");
        std::string out;
        char buf[3];
        for (unsigned int i = 0; i < len; ++i) {
            std::snprintf(buf, sizeof buf, "%02x", md[i]);
            out += buf;
        }
        return out;
    }

private:
    EVP_MD_CTX* ctx_;
};

} // namespace

std::string sha256_bytes(const std::string& bytes) {
    Sha256 h;
    h.update(bytes.data(), bytes.size());
    return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open " + path.string() + " for hashing");
    Sha256 h;
    std::array<char, 1 << 16> buf;
    while (is) {
        is.read(buf.data(), buf.size());
        h.update(buf.data(), static_cast<std::size_t>(is.gcount()));
    }
    return h.hex();
}

Manifest::Manifest(std::filesystem::path dir) : dir_(std::move(dir)) { j_["phases"] = nlohmann::json::object(); }

Manifest Manifest::open(const std::filesystem::path& dir) {
    Manifest m(dir);
    if (std::filesystem::exists(m.path())) {
        std::ifstream is(m.path());
        try {
            m.j_ = nlohmann::json::parse(is);
        } catch (const nlohmann::json::parse_error& e) {
            throw CheckpointError(m.path().string() + " is not valid JSON: " + e.what());
        }
        if (!m.j_.contains("phases")) m.j_["phases"] = nlohmann::json::object();
    }
    return m;
}

void Manifest::save() const {
    std::filesystem::create_directories(dir_);
    const auto tmp = dir_ / "manifest.json.tmp";
    {
        std::ofstream os(tmp);
        os << j_.dump(2) << '\n';
        if (!os) throw Error("cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, path());
}

bool Manifest::has_phase(const std::string& name) const {
    return j_.contains("phases") && j_["phases"].contains(name);
}

std::string Manifest::recorded_hash(const std::string& phase) const {
    if (!has_phase(phase) || !j_["phases"][phase].contains("sha256")) {
        throw CheckpointError("manifest has no record of phase '" + phase + "'; run it first");
    }
    return j_["phases"][phase]["sha256"].get<std::string>();
}

void Manifest::verify(const std::string& phase, const std::filesystem::path& file) const {
    const std::string want = recorded_hash(phase);
    const std::string got = sha256_file(file);
    if (want != got) {
        throw CheckpointError("checkpoint hash mismatch for " + file.string() + ": manifest records " + want +
                              " (phase '" + phase + "'), file hashes to " + got);
    }
}

} // namespace repcond::pipeline
