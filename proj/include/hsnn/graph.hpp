#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hsnn/tensor.hpp"

namespace hsnn {

template <class T>
class Graph;

/// A named trainable tensor that outlives any single graph. Gradients from
/// every graph it participates in accumulate into `grad`.
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  void zero_grad() {
    if (grad.empty())
      grad = Tensor<T>::zeros(value.shape());
    else
      grad.fill(T{0});
  }
};

/// Handle to a node of a Graph. Cheap to copy; only valid while its graph lives.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Graph<T>* g, std::size_t id) : g_(g), id_(id) {}

  bool valid() const { return g_ != nullptr; }
  Graph<T>& graph() const { return *g_; }
  std::size_t id() const { return id_; }
  const Tensor<T>& value() const { return g_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(int axis) const { return value().dim(axis); }
  std::size_t numel() const { return value().numel(); }

 private:
  Graph<T>* g_ = nullptr;
  std::size_t id_ = 0;
};

/// Append-only operation tape. Nodes are stored in creation order, which is
/// also a topological order, so the backward sweep is a single reverse scan.
template <class T>
class Graph {
 public:
  /// Receives the graph, the node's own id and the node's gradient.
  using BackwardFn = std::function<void(Graph&, std::size_t self, const Tensor<T>& grad_out)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// When disabled, no node requires a gradient and no backward closures are kept.
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }

  Var<T> constant(Tensor<T> value) { return push("constant", {}, std::move(value), false, nullptr); }

  Var<T> leaf(Tensor<T> value, bool requires_grad = true) {
    return push("leaf", {}, std::move(value), requires_grad && grad_enabled_, nullptr);
  }

  /// Leaf bound to a persistent parameter; repeated calls return the same node.
  Var<T> param(Parameter<T>& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var<T>(this, it->second);
    Var<T> v = push("param:" + p.name, {}, p.value, grad_enabled_, nullptr);
    nodes_[v.id()].param = &p;
    param_nodes_.emplace(&p, v.id());
    return v;
  }

  /// Appends the result of an operation. The backward closure is kept only
  /// when at least one input needs a gradient.
  Var<T> record(std::string op, const std::vector<Var<T>>& inputs, Tensor<T> value, BackwardFn fn) {
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    bool needs = false;
    for (const auto& v : inputs) {
      if (v.valid() && &v.graph() != this) throw std::logic_error(op + ": operands belong to different graphs");
      ids.push_back(v.id());
      needs = needs || nodes_[v.id()].requires_grad;
    }
    return push(std::move(op), std::move(ids), std::move(value), needs, needs ? std::move(fn) : nullptr);
  }

  std::size_t size() const { return nodes_.size(); }
  const std::string& op_name(std::size_t id) const { return nodes_[id].op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient accumulator of a node, created as zeros on first use.
  Tensor<T>& grad_slot(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor<T>::zeros(n.value.shape());
    return n.grad;
  }

  /// Gradient of `v` after backward(); zeros for unreachable nodes.
  Tensor<T> grad(const Var<T>& v) const {
    const auto& n = nodes_[v.id()];
    return n.grad.empty() ? Tensor<T>::zeros(n.value.shape()) : n.grad;
  }

  /// Reverse sweep from a scalar loss. Each node's closure runs at most once.
  /// Gradients of parameter leaves are added into Parameter::grad.
  void backward(const Var<T>& loss) {
    if (loss.numel() != 1)
      throw ShapeError("backward requires a scalar loss, got shape " + to_string(loss.shape()));
    if (backward_done_) throw std::logic_error("backward already ran on this graph");
    backward_done_ = true;
    grad_slot(loss.id()).fill(T{1});
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      auto& n = nodes_[id];
      if (n.grad.empty() || !n.requires_grad) continue;
      if (n.backward) {
        n.backward(*this, id, n.grad);
        n.backward = nullptr;
        if (id != loss.id()) n.grad = Tensor<T>();
      }
    }
    for (auto& [p, id] : param_nodes_) {
      const auto& g = nodes_[id].grad;
      if (g.empty()) continue;
      if (p->grad.empty()) p->grad = Tensor<T>::zeros(p->value.shape());
      p->grad += g;
    }
  }

 private:
  struct Node {
    std::string op;
    std::vector<std::size_t> inputs;
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
  };

  Var<T> push(std::string op, std::vector<std::size_t> inputs, Tensor<T> value, bool requires_grad,
              BackwardFn fn) {
    nodes_.push_back(Node{std::move(op), std::move(inputs), std::move(value), Tensor<T>(),
                          requires_grad, std::move(fn), nullptr});
    return Var<T>(this, nodes_.size() - 1);
  }

  std::deque<Node> nodes_;
  std::unordered_map<Parameter<T>*, std::size_t> param_nodes_;
  bool grad_enabled_ = true;
  bool backward_done_ = false;
};

}  // namespace hsnn
