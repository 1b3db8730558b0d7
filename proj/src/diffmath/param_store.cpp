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

#include "repcond/diffmath/param_store.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "repcond/errors.hpp"

namespace repcond::diffmath {

namespace {

class Writer {
public:
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    }
    std::vector<std::uint8_t> out;

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) {
            out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    double f64() { return std::bit_cast<double>(get(8)); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == in_.size(); }

private:
    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) {
            throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
        }
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) {
            v |= std::uint64_t(in_[pos_ + i]) << (8 * i);
        }
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    const std::vector<std::uint8_t>& in_;
    std::size_t pos_ = 0;
};

} // namespace

void ParamStore::add(const std::string& name, Array value, bool trainable) {
    if (contains(name)) {
        throw ContractError("duplicate parameter name '" + name + "'");
    }
    set(name, std::move(value), trainable);
}

void ParamStore::set(const std::string& name, Array value, bool trainable) {
    Entry e;
    e.grad = Array::zeros_like(value);
    e.value = std::move(value);
    e.trainable = trainable;
    entries_[name] = std::move(e);
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
        throw ContractError("unknown parameter '" + name + "'");
    }
    return it->second;
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
        throw ContractError("unknown parameter '" + name + "'");
    }
    return it->second;
}

void ParamStore::set_trainable(const std::string& name, bool trainable) {
    entry(name).trainable = trainable;
}

void ParamStore::set_trainable_prefix(const std::string& prefix, bool trainable) {
    for (auto& [name, e] : entries_) {
        if (name.rfind(prefix, 0) == 0) {
            e.trainable = trainable;
        }
    }
}

void ParamStore::zero_grad() {
    for (auto& [name, e] : entries_) {
        e.grad.fill(0.0);
    }
}

void ParamStore::merge(const ParamStore& other) {
    for (const auto& [name, e] : other.entries_) {
        add(name, e.value, e.trainable);
    }
}

ParamStore ParamStore::extract(const std::string& prefix) const {
    ParamStore out;
    for (const auto& [name, e] : entries_) {
        if (name.rfind(prefix, 0) == 0) {
            out.add(name, e.value, e.trainable);
        }
    }
    return out;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, e] : entries_) {
        out.push_back(name);
    }
    return out;
}

std::vector<std::uint8_t> ParamStore::serialize() const {
    Writer w;
    w.bytes(kCheckpointMagic, 8);
    w.u64(entries_.size());
    nlohmann::json trainable = nlohmann::json::object();
    for (const auto& [name, e] : entries_) {
        w.u32(static_cast<std::uint32_t>(name.size()));
        w.bytes(name.data(), name.size());
        w.u32(static_cast<std::uint32_t>(e.value.ndim()));
        for (auto d : e.value.shape()) {
            w.u64(d);
        }
        for (double v : e.value.data()) {
            w.f64(v);
        }
        trainable[name] = e.trainable;
    }
    const std::string manifest = nlohmann::json{{"trainable", trainable}}.dump();
    w.u64(manifest.size());
    w.bytes(manifest.data(), manifest.size());
    return std::move(w.out);
}

ParamStore ParamStore::deserialize(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
        throw CheckpointError("bad checkpoint magic (expected LNSCKPT1)");
    }
    Reader r(bytes);
    r.str(8);
    const std::uint64_t count = r.u64();
    ParamStore store;
    std::vector<std::string> order;
    for (std::uint64_t k = 0; k < count; ++k) {
        const std::string name = r.str(r.u32());
        const std::uint32_t ndim = r.u32();
        if (ndim > 2) {
            throw CheckpointError("entry '" + name + "' has unsupported rank " + std::to_string(ndim));
        }
        Shape shape(ndim);
        for (auto& d : shape) {
            d = r.u64();
        }
        const std::size_t n = shape_size(shape);
        if (n > bytes.size() / 8) {
            throw CheckpointError("entry '" + name + "' is larger than the file");
        }
        std::vector<double> data(n);
        for (auto& v : data) {
            v = r.f64();
        }
        if (store.contains(name)) {
            throw CheckpointError("duplicate entry '" + name + "'");
        }
        store.add(name, Array(std::move(shape), std::move(data)), true);
        order.push_back(name);
    }
    const std::string manifest = r.str(r.u64());
    if (!r.at_end()) {
        throw CheckpointError("trailing bytes after checkpoint manifest");
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(manifest);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint manifest is not valid JSON: ") + e.what());
    }
    const auto& flags = j.at("trainable");
    for (const auto& name : order) {
        if (!flags.contains(name)) {
            throw CheckpointError("manifest lacks trainable flag for '" + name + "'");
        }
        store.set_trainable(name, flags.at(name).get<bool>());
    }
    return store;
}

void ParamStore::save(const std::filesystem::path& path) const {
    const auto bytes = serialize();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open '" + path.string() + "' for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error("failed writing '" + path.string() + "'");
    }
}

ParamStore ParamStore::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

bool operator==(const ParamStore& a, const ParamStore& b) {
    if (a.entries_.size() != b.entries_.size()) {
        return false;
    }
    for (auto ia = a.entries_.begin(), ib = b.entries_.begin(); ia != a.entries_.end(); ++ia, ++ib) {
        if (ia->first != ib->first || ia->second.trainable != ib->second.trainable) {
            return false;
        }
        const auto& va = ia->second.value;
        const auto& vb = ib->second.value;
        if (va.shape() != vb.shape() ||
            std::memcmp(va.data().data(), vb.data().data(), va.size() * sizeof(double)) != 0) {
            return false;
        }
    }
    return true;
}

} // namespace repcond::diffmath
