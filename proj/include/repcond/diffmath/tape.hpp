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
#include <functional>
#include <initializer_list>
#include <map>
#include <string>
#include <vector>

#include "repcond/diffmath/array.hpp"

namespace repcond::diffmath {

class ParamStore;
class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
struct Var {
    Tape* tape = nullptr;
    std::uint32_t id = 0;

    const Array& value() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;
};

enum class GradMode { Enabled, Disabled };

/// Reverse-mode record of primitive operations.
///
/// Each node stores its forward value and, when any input needs a gradient,
/// a local adjoint rule. `backward` replays those rules in reverse insertion
/// order. Nodes that need no gradient keep no closure, so frozen forward
/// passes cost little more than plain evaluation.
class Tape {
public:
    using Backward = std::function<void(Tape&, std::uint32_t self)>;

    explicit Tape(GradMode mode = GradMode::Enabled) : mode_(mode) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Array value);
    Var variable(Array value);

    /// Leaf bound to `store[name]`. Requires a gradient iff the entry is
    /// trainable and the tape records gradients. Repeated calls with the same
    /// name return the same node.
    Var param(ParamStore& store, const std::string& name);

    /// Appends an operation node. `backward` is dropped when no input
    /// requires a gradient.
    Var record(Array value, std::initializer_list<Var> inputs, Backward backward);
    Var record(Array value, const std::vector<Var>& inputs, Backward backward);

    const Array& value(std::uint32_t id) const { return nodes_[id].value; }
    const Array& value(Var v) const { return nodes_[v.id].value; }
    bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
    const std::vector<std::uint32_t>& inputs(std::uint32_t id) const { return nodes_[id].inputs; }

    /// Accumulated adjoint of a node (zeros when nothing flowed into it).
    Array grad(Var v) const;

    /// Adjoint of the node currently being processed by `backward`.
    const Array& out_grad(std::uint32_t id) const { return nodes_[id].grad; }

    /// Gradient accumulator of an input, allocated on first use; nullptr
    /// when the node does not require a gradient.
    Array* grad_target(std::uint32_t id);

    /// Seeds d(loss)/d(loss) = 1 and runs every adjoint rule in reverse.
    /// Throws ContractError when `loss` is not a scalar.
    void backward(Var loss);

    /// Adds the gradients of bound trainable parameters into the store.
    void write_param_grads(ParamStore& store) const;

    std::size_t size() const noexcept { return nodes_.size(); }
    GradMode mode() const noexcept { return mode_; }

private:
    struct Node {
        Array value;
        Array grad;
        bool requires_grad = false;
        bool has_grad = false;
        std::vector<std::uint32_t> inputs;
        Backward backward;
    };

    Var push(Node node);

    GradMode mode_;
    std::vector<Node> nodes_;
    std::map<std::string, std::uint32_t> params_;
};

/// Evaluates `loss_fn` on a fresh tape, back-propagates, and adds parameter
/// gradients into `params` (callers zero them first when needed). Returns
/// the scalar loss value.
double value_and_grad(const std::function<Var(Tape&)>& loss_fn, ParamStore& params);

} // namespace repcond::diffmath
