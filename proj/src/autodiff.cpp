#include "lgode/autodiff.hpp"

namespace lgode::ad {

ShapeError::ShapeError(const std::string& op, const Shape& a, const Shape& b)
    : std::invalid_argument(op + ": shape mismatch " + a.str() + " vs " + b.str()) {}

ShapeError::ShapeError(const std::string& op, const std::string& detail)
    : std::invalid_argument(op + ": " + detail) {}

Var Tape::constant(Tensor value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return {this, static_cast<NodeId>(nodes_.size() - 1)};
}

Var Tape::variable(Tensor value) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = true;
    n.leaf = true;
    nodes_.push_back(std::move(n));
    return {this, static_cast<NodeId>(nodes_.size() - 1)};
}

Var Tape::record(Tensor value, std::vector<NodeId> parents, Backward backward) {
    Node n;
    n.value = std::move(value);
    for (NodeId p : parents) {
        if (p >= nodes_.size()) throw std::logic_error("Tape::record: parent not on this tape");
        n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
    }
    n.parents = std::move(parents);
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, static_cast<NodeId>(nodes_.size() - 1)};
}

Tensor* Tape::grad_sink(NodeId id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty() && n.value.size() != 0) n.grad = Tensor(n.value.shape());
    return &n.grad;
}

void Tape::backward(Var loss) {
    if (loss.tape() != this) throw std::invalid_argument("backward: loss is not on this tape");
    if (loss.shape() != Shape{1, 1}) throw ShapeError("backward", "loss must be 1x1, got " + loss.shape().str());
    for (Node& n : nodes_) n.grad = Tensor();
    if (!nodes_[loss.id()].requires_grad) return;
    nodes_[loss.id()].grad = Tensor::scalar(1.0);
    for (std::size_t k = loss.id() + 1; k-- > 0;) {
        Node& n = nodes_[k];
        if (n.leaf || n.grad.empty() || !n.backward) continue;
        // The closure may touch other nodes' grads, so move ours out first.
        Tensor g = std::move(n.grad);
        n.grad = Tensor();
        n.backward(*this, g);
    }
}

Tensor Tape::grad(Var v) const {
    const Node& n = nodes_[v.id()];
    if (n.grad.empty()) return Tensor(n.value.shape());
    return n.grad;
}

}  // namespace lgode::ad
