// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0

#include "acd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace acd {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) {
        n *= e;
    }
    return n;
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

void check_shape(const Shape& shape) {
    for (std::size_t e : shape) {
        if (e == 0) {
            throw ShapeError("tensor: zero extent in shape " + to_string(shape));
        }
    }
}

detail::Node& deref(const std::shared_ptr<detail::Node>& n) {
    if (!n) {
        throw std::logic_error("tensor: use of undefined tensor");
    }
    return *n;
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<detail::Node>()) {
    check_shape(shape);
    node_->value.assign(shape_numel(shape), fill);
    node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : node_(std::make_shared<detail::Node>()) {
    check_shape(shape);
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("tensor: shape " + to_string(shape) + " needs " + std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(values.size()));
    }
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw NonFiniteError("tensor: non-finite initial value");
        }
    }
    node_->value = std::move(values);
    node_->shape = std::move(shape);
}

const Shape& Tensor::shape() const { return deref(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const Shape& s = shape();
    if (axis >= s.size()) {
        throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
    }
    return s[axis];
}

std::size_t Tensor::numel() const { return deref(node_).value.size(); }

std::span<const double> Tensor::values() const { return deref(node_).value; }

std::span<double> Tensor::mutable_values() {
    detail::Node& n = deref(node_);
    if (n.backward) {
        throw std::logic_error("tensor: in-place mutation of a non-leaf tensor");
    }
    return n.value;
}

double Tensor::item() const {
    if (numel() != 1) {
        throw ShapeError("tensor: item() on shape " + to_string(shape()));
    }
    return values()[0];
}

bool Tensor::requires_grad() const { return deref(node_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    detail::Node& n = deref(node_);
    if (n.backward) {
        throw std::logic_error("tensor: requires_grad can only be set on leaves");
    }
    n.requires_grad = on;
    return *this;
}

bool Tensor::is_leaf() const { return !deref(node_).backward; }

bool Tensor::has_grad() const {
    const detail::Node& n = deref(node_);
    return !n.grad.empty();
}

std::span<const double> Tensor::grad() const { return deref(node_).grad; }

void Tensor::zero_grad() {
    detail::Node& n = deref(node_);
    if (!n.grad.empty()) {
        std::fill(n.grad.begin(), n.grad.end(), 0.0);
    }
}

void Tensor::clear_grad() { deref(node_).grad.clear(); }

Tensor Tensor::detach() const {
    const detail::Node& n = deref(node_);
    auto out = std::make_shared<detail::Node>();
    out->shape = n.shape;
    out->value = n.value;
    return Tensor(std::move(out));
}

const char* Tensor::op_name() const { return deref(node_).op; }

Graph& Graph::local() {
    thread_local Graph graph;
    return graph;
}

void backward(const Tensor& loss) {
    if (!loss.defined()) {
        throw std::invalid_argument("backward: undefined loss");
    }
    if (loss.numel() != 1) {
        throw ShapeError("backward: loss must be scalar, got shape " + to_string(loss.shape()));
    }
    if (!loss.requires_grad()) {
        throw std::invalid_argument("backward: loss does not depend on any tensor requiring grad");
    }
    detail::Node* root = loss.node().get();

    std::unordered_set<const detail::Node*> reachable;
    std::vector<const detail::Node*> stack{root};
    while (!stack.empty()) {
        const detail::Node* n = stack.back();
        stack.pop_back();
        if (!reachable.insert(n).second) {
            continue;
        }
        for (const auto& p : n->parents) {
            if (p->requires_grad) {
                stack.push_back(p.get());
            }
        }
    }

    const auto& tape = Graph::local().tape();
    // Interior grads from an earlier backward over the same tape are stale.
    for (const auto& n : tape) {
        if (reachable.count(n.get()) && n->backward) {
            n->grad.assign(n->value.size(), 0.0);
        }
    }
    if (!root->backward) {
        root->ensure_grad();
        root->grad[0] += 1.0;
        return;
    }
    root->grad[0] = 1.0;
    std::size_t visited = 0;
    for (auto it = tape.rbegin(); it != tape.rend(); ++it) {
        detail::Node* n = it->get();
        if (!reachable.count(n) || !n->backward) {
            continue;
        }
        n->backward(*n);
        ++visited;
    }
    if (visited == 0) {
        throw std::logic_error("backward: loss node is not on this thread's tape");
    }
}

}  // namespace acd
