#pragma once

// Reverse-mode automatic differentiation on a linear tape.
//
// A Tape owns every value produced during one forward pass. Nodes are appended
// in evaluation order, so parents always precede children and backward() is a
// single reverse sweep. A tape is single-owner; independent tapes can be used
// concurrently.

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lgode/tensor.hpp"

namespace lgode::ad {

using NodeId = std::uint32_t;

class Tape;

/// Raised by any op whose operand shapes do not conform.
class ShapeError : public std::invalid_argument {
public:
    ShapeError(const std::string& op, const Shape& a, const Shape& b);
    ShapeError(const std::string& op, const std::string& detail);
};

/// Handle to a node on a tape.
class Var {
public:
    Var() = default;
    Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t rows() const { return shape().rows; }
    std::size_t cols() const { return shape().cols; }
    NodeId id() const { return id_; }
    Tape* tape() const { return tape_; }
    bool valid() const { return tape_ != nullptr; }
    bool requires_grad() const;

private:
    Tape* tape_ = nullptr;
    NodeId id_ = 0;
};

class Tape {
public:
    /// Receives the gradient of the loss with respect to this node's output.
    using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    Var constant(Tensor value);
    /// Leaf whose gradient is kept after backward().
    Var variable(Tensor value);
    /// Appends an op result. The backward closure is dropped when no parent needs a gradient.
    Var record(Tensor value, std::vector<NodeId> parents, Backward backward);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }
    std::span<const NodeId> parents(NodeId id) const { return nodes_[id].parents; }
    std::size_t size() const { return nodes_.size(); }

    /// Gradient buffer to accumulate into, zero-initialized on first use;
    /// nullptr when the node does not participate in differentiation.
    Tensor* grad_sink(NodeId id);

    /// Reverse sweep from a 1x1 loss. Gradients of intermediate nodes are
    /// released as soon as they have been propagated; leaf gradients remain.
    void backward(Var loss);

    /// Gradient of the last backward() loss with respect to a variable leaf.
    /// Zero tensor of matching shape when the leaf was unreachable.
    Tensor grad(Var v) const;

private:
    struct Node {
        Tensor value;
        std::vector<NodeId> parents;
        Backward backward;
        Tensor grad;
        bool requires_grad = false;
        bool leaf = false;
    };
    std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

}  // namespace lgode::ad
