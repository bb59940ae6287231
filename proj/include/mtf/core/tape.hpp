#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mtf/core/tensor.hpp"

namespace mtf {

/// A trainable tensor with its gradient and momentum buffers. All three
/// share one shape.
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> momentum;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), momentum(value.shape()) {}
};

/// Handle to a node on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
  friend bool operator==(Var a, Var b) { return a.id == b.id; }
};

/// Reverse-mode autodiff tape. Nodes are appended in evaluation order, so
/// the reverse of insertion order is a valid topological order and the
/// graph is acyclic by construction.
///
/// A tape is single-owner. Parameters are referenced, not copied; several
/// tapes may read the same parameters concurrently as long as nobody
/// updates them.
template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Var self)>;

  explicit Tape(bool record = true) : record_(record) { nodes_.reserve(64); }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Tensor<T> v) { return leaf(std::move(v), false); }

  Var input(Tensor<T> v, bool requires_grad) { return leaf(std::move(v), requires_grad && record_); }

  Var param(const Parameter<T>& p) {
    Node n;
    n.ref = &p.value;
    n.needs_grad = record_;
    nodes_.push_back(std::move(n));
    Var v{nodes_.size() - 1};
    if (record_) param_nodes_[&p] = v.id;
    return v;
  }

  /// Appends an operator result. The backward closure is kept only when the
  /// tape records and some input needs a gradient.
  Var push(Tensor<T> value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
  }

  Var push(Tensor<T> value, std::span<const Var> inputs, BackwardFn fn) {
    bool needs = false;
    if (record_) {
      for (Var in : inputs) needs = needs || nodes_.at(in.id).needs_grad;
    }
    Node n;
    n.owned = std::move(value);
    n.needs_grad = needs;
    if (needs) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  const Tensor<T>& value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.ref ? *n.ref : n.owned;
  }

  bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }

  /// Gradient accumulator of a node. Valid during and after backward().
  Tensor<T>& grad(Var v) { return nodes_.at(v.id).grad; }
  const Tensor<T>& grad(Var v) const { return nodes_.at(v.id).grad; }

  /// Runs the reverse sweep from a scalar root. Every accumulator is reset
  /// to zero first, so calling backward twice gives the same result.
  void backward(Var root) {
    if (!record_) throw InternalError("backward() on a non-recording tape");
    if (value(root).size() != 1) throw ShapeError("backward root must be a scalar, got " + value(root).shape().str());
    for (std::size_t i = 0; i <= root.id; ++i) {
      Node& n = nodes_[i];
      if (n.needs_grad) {
        n.grad = Tensor<T>(value(Var{i}).shape());
      }
    }
    if (!nodes_[root.id].needs_grad) return;
    nodes_[root.id].grad[0] = T(1);
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.needs_grad && n.backward) n.backward(*this, Var{i});
    }
  }

  /// Gradient reaching a parameter in the last backward(), or nullptr when
  /// the parameter was not used on this tape.
  const Tensor<T>* gradient(const Parameter<T>& p) const {
    auto it = param_nodes_.find(&p);
    if (it == param_nodes_.end()) return nullptr;
    const Node& n = nodes_[it->second];
    return n.grad.empty() ? nullptr : &n.grad;
  }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* ref = nullptr;
    Tensor<T> grad;
    BackwardFn backward;
    bool needs_grad = false;
  };

  Var leaf(Tensor<T> v, bool needs) {
    Node n;
    n.owned = std::move(v);
    n.needs_grad = needs;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  bool record_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::size_t> param_nodes_;
};

}  // namespace mtf
