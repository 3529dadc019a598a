#include "swarmloc/ad/tape.hpp"

#include "swarmloc/error.hpp"

namespace swarmloc::ad {

Tensor Gradients::of(const Var& v) const {
  if (v.id() < nodes.size() && !nodes[v.id()].empty()) {
    return nodes[v.id()];
  }
  return Tensor(v.rows(), v.cols(), 0.0);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor{}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::input(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor{}, nullptr, grad_enabled_});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const std::string& name, Tensor value) {
  if (params_.count(name) != 0) {
    throw Error("parameter '" + name + "' registered twice on one tape");
  }
  Var v = input(std::move(value));
  params_[name] = v.id();
  return v;
}

Var Tape::record(Tensor value, bool requires_grad, BackwardFn backward) {
  const bool track = grad_enabled_ && requires_grad;
  nodes_.push_back(Node{std::move(value), Tensor{}, track ? std::move(backward) : nullptr, track});
  return Var(this, nodes_.size() - 1);
}

bool Tape::any_requires_grad(std::initializer_list<Var> vars) const {
  for (const Var& v : vars) {
    if (nodes_[v.id()].requires_grad) return true;
  }
  return false;
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) {
    n.grad = Tensor(n.value.rows(), n.value.cols(), 0.0);
  }
  return n.grad;
}

Gradients Tape::backward(const Var& loss) {
  if (loss.tape() != this) {
    throw Error("backward: loss belongs to a different tape");
  }
  if (loss.value().size() != 1) {
    throw ShapeError("backward: loss must be a 1x1 scalar");
  }
  for (Node& n : nodes_) {
    n.grad = Tensor{};
  }
  grad(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.backward && !n.grad.empty()) {
      n.backward(*this, id);
    }
  }
  Gradients out;
  for (const auto& [name, id] : params_) {
    const Node& n = nodes_[id];
    out.params[name] = n.grad.empty() ? Tensor(n.value.rows(), n.value.cols(), 0.0) : n.grad;
  }
  out.nodes.reserve(nodes_.size());
  for (Node& n : nodes_) {
    out.nodes.push_back(std::move(n.grad));
    n.grad = Tensor{};
  }
  return out;
}

}  // namespace swarmloc::ad
