#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "swarmloc/ad/tensor.hpp"

namespace swarmloc::ad {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double item() const { return value().item(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradients produced by Tape::backward.
struct Gradients {
  /// Parameter name -> gradient (zero for parameters the loss does not touch).
  std::map<std::string, Tensor> params;
  /// Gradients of every node, indexed by Var::id(); empty tensor when unused.
  std::vector<Tensor> nodes;

  /// Gradient of an arbitrary recorded value (zeros if it did not contribute).
  Tensor of(const Var& v) const;
};

/// Dynamic reverse-mode tape. Nodes are appended in execution order; backward
/// visits them in exact reverse order. One tape per thread.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor value);
  /// Leaf that receives a gradient.
  Var input(Tensor value);
  /// Named leaf whose gradient is reported in Gradients::params.
  Var parameter(const std::string& name, Tensor value);

  /// Appends a result. `backward` is dropped when no parent requires a
  /// gradient or when grad tracking is disabled.
  Var record(Tensor value, bool requires_grad, BackwardFn backward);

  bool requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }
  bool any_requires_grad(std::initializer_list<Var> vars) const;

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient accumulator of node `id`, allocated as zeros on first use.
  Tensor& grad(std::size_t id);
  const Tensor& grad_view(std::size_t id) const { return nodes_[id].grad; }

  /// Runs the reverse sweep from a 1x1 loss. Throws ShapeError otherwise.
  Gradients backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> params_;
  bool grad_enabled_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

}  // namespace swarmloc::ad
