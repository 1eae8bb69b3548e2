// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense tensors with tape-based reverse-mode autodiff.
//
// Values are held as doubles. When the active graph runs at Precision::f32,
// every op output is rounded to the nearest float so that a checkpoint written
// in float32 restores the exact training state.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace acd {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Precision : std::uint8_t { f32, f64 };

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until backward touches the node
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    // Propagates this node's grad into its parents' grads.
    std::function<void(Node&)> backward;

    void ensure_grad() {
        if (grad.size() != value.size()) {
            grad.assign(value.size(), 0.0);
        }
    }
};

}  // namespace detail

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t ndim() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> values() const;
    // Writable view; only leaves may be mutated in place.
    std::span<double> mutable_values();
    double operator[](std::size_t i) const { return values()[i]; }
    double item() const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on);
    bool is_leaf() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();
    // Drops the accumulated gradient buffer entirely (has_grad() becomes false).
    void clear_grad();

    // Leaf copy of the values, detached from any graph.
    Tensor detach() const;
    const char* op_name() const;

    const std::shared_ptr<detail::Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

// Per-thread operation tape. Nodes are appended in creation order, which is a
// valid topological order for backward.
class Graph {
public:
    static Graph& local();

    void reset() { tape_.clear(); }
    std::size_t size() const { return tape_.size(); }
    bool grad_enabled() const { return grad_enabled_; }
    Precision precision() const { return precision_; }
    void record(std::shared_ptr<detail::Node> node) { tape_.push_back(std::move(node)); }
    const std::vector<std::shared_ptr<detail::Node>>& tape() const { return tape_; }

private:
    friend class NoGradGuard;
    friend class PrecisionGuard;

    std::vector<std::shared_ptr<detail::Node>> tape_;
    bool grad_enabled_ = true;
    Precision precision_ = Precision::f64;
};

class NoGradGuard {
public:
    NoGradGuard() : prev_(Graph::local().grad_enabled_) { Graph::local().grad_enabled_ = false; }
    ~NoGradGuard() { Graph::local().grad_enabled_ = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

class PrecisionGuard {
public:
    explicit PrecisionGuard(Precision p) : prev_(Graph::local().precision_) { Graph::local().precision_ = p; }
    ~PrecisionGuard() { Graph::local().precision_ = prev_; }
    PrecisionGuard(const PrecisionGuard&) = delete;
    PrecisionGuard& operator=(const PrecisionGuard&) = delete;

private:
    Precision prev_;
};

// Rounds v to the representable value of the given precision.
inline double round_to(double v, Precision p) {
    return p == Precision::f32 ? static_cast<double>(static_cast<float>(v)) : v;
}

// Populates grads of every requires_grad ancestor of a scalar loss.
void backward(const Tensor& loss);

}  // namespace acd
