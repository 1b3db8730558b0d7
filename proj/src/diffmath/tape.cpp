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

#include "repcond/diffmath/tape.hpp"

#include "repcond/diffmath/param_store.hpp"
#include "repcond/errors.hpp"

namespace repcond::diffmath {

const Array& Var::value() const { return tape->value(*this); }

bool Var::requires_grad() const { return tape->requires_grad(*this); }

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Array value) {
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::variable(Array value) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = mode_ == GradMode::Enabled;
    return push(std::move(n));
}

Var Tape::param(ParamStore& store, const std::string& name) {
    if (auto it = params_.find(name); it != params_.end()) {
        return Var{this, it->second};
    }
    const auto& e = store.entry(name);
    Node n;
    n.value = e.value;
    n.requires_grad = mode_ == GradMode::Enabled && e.trainable;
    Var v = push(std::move(n));
    params_.emplace(name, v.id);
    return v;
}

Var Tape::record(Array value, std::initializer_list<Var> inputs, Backward backward) {
    return record(std::move(value), std::vector<Var>(inputs), std::move(backward));
}

Var Tape::record(Array value, const std::vector<Var>& inputs, Backward backward) {
    Node n;
    n.value = std::move(value);
    for (const auto& in : inputs) {
        if (in.tape != this) {
            throw ContractError("operation mixes variables from different tapes");
        }
        n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
    }
    if (n.requires_grad) {
        n.inputs.reserve(inputs.size());
        for (const auto& in : inputs) {
            n.inputs.push_back(in.id);
        }
        n.backward = std::move(backward);
    }
    return push(std::move(n));
}

Array Tape::grad(Var v) const {
    const auto& n = nodes_[v.id];
    return n.has_grad ? n.grad : Array::zeros_like(n.value);
}

Array* Tape::grad_target(std::uint32_t id) {
    auto& n = nodes_[id];
    if (!n.requires_grad) {
        return nullptr;
    }
    if (!n.has_grad) {
        n.grad = Array::zeros_like(n.value);
        n.has_grad = true;
    }
    return &n.grad;
}

void Tape::backward(Var loss) {
    if (loss.tape != this) {
        throw ContractError("backward on a variable from another tape");
    }
    if (value(loss).size() != 1) {
        throw ContractError("loss must be a scalar, got shape " +
                            shape_string(value(loss).shape()));
    }
    if (!nodes_[loss.id].requires_grad) {
        return;
    }
    for (auto& n : nodes_) {
        n.has_grad = false;
    }
    grad_target(loss.id)->fill(1.0);
    for (std::uint32_t id = loss.id + 1; id-- > 0;) {
        auto& n = nodes_[id];
        if (n.has_grad && n.backward) {
            n.backward(*this, id);
        }
    }
}

void Tape::write_param_grads(ParamStore& store) const {
    for (const auto& [name, id] : params_) {
        const auto& n = nodes_[id];
        if (!n.requires_grad || !n.has_grad || !store.contains(name)) {
            continue;
        }
        auto& e = store.entry(name);
        if (!e.trainable) {
            continue;
        }
        e.grad.mat() += n.grad.mat();
    }
}

double value_and_grad(const std::function<Var(Tape&)>& loss_fn, ParamStore& params) {
    Tape tape;
    Var loss = loss_fn(tape);
    tape.backward(loss);
    tape.write_param_grads(params);
    return tape.value(loss).item();
}

} // namespace repcond::diffmath
