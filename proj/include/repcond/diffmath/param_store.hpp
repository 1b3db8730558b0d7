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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "repcond/diffmath/array.hpp"

namespace repcond::diffmath {

/// Named parameter arrays with gradient slots and a trainable flag.
///
/// Entries are kept in lexicographic name order, which fixes the order of
/// the serialized checkpoint.
class ParamStore {
public:
    struct Entry {
        Array value;
        Array grad;
        bool trainable = true;
    };

    /// Adds a new entry; throws ContractError on a duplicate name.
    void add(const std::string& name, Array value, bool trainable = true);
    /// Adds or replaces an entry.
    void set(const std::string& name, Array value, bool trainable = true);

    bool contains(const std::string& name) const { return entries_.count(name) != 0; }
    /// Throws ContractError for unknown names.
    const Entry& entry(const std::string& name) const;
    Entry& entry(const std::string& name);
    const Array& value(const std::string& name) const { return entry(name).value; }
    Array& value(const std::string& name) { return entry(name).value; }
    const Array& grad(const std::string& name) const { return entry(name).grad; }
    Array& grad(const std::string& name) { return entry(name).grad; }
    bool trainable(const std::string& name) const { return entry(name).trainable; }

    void set_trainable(const std::string& name, bool trainable);
    /// Sets the flag for every entry whose name starts with `prefix`.
    void set_trainable_prefix(const std::string& prefix, bool trainable);
    void zero_grad();

    /// Copies every entry of `other` (names must not collide).
    void merge(const ParamStore& other);
    /// Subset of entries whose name starts with `prefix`.
    ParamStore extract(const std::string& prefix) const;

    std::vector<std::string> names() const;
    std::size_t size() const noexcept { return entries_.size(); }
    const std::map<std::string, Entry>& entries() const noexcept { return entries_; }

    /// LNSCKPT1 byte image (see README for the layout).
    std::vector<std::uint8_t> serialize() const;
    static ParamStore deserialize(const std::vector<std::uint8_t>& bytes);

    void save(const std::filesystem::path& path) const;
    static ParamStore load(const std::filesystem::path& path);

    /// Exact equality of names, values and trainable flags.
    friend bool operator==(const ParamStore& a, const ParamStore& b);

private:
    std::map<std::string, Entry> entries_;
};

inline constexpr char kCheckpointMagic[] = "LNSCKPT1";

} // namespace repcond::diffmath
