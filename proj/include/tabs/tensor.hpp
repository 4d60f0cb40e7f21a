#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tabs/common.hpp"

namespace tabs {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

namespace detail {

template <typename T>
struct GradNode;

// Storage shared by tensor handles. Ops allocate a fresh payload for their
// output and, when recording, hang a GradNode off it pointing at the inputs.
template <typename T>
struct Payload {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until backward first touches this payload
  bool requires_grad = false;
  std::shared_ptr<GradNode<T>> node;

  bool needs_grad() const { return requires_grad || node != nullptr; }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

template <typename T>
struct GradNode {
  const char* op = "";
  std::vector<std::shared_ptr<Payload<T>>> inputs;
  // Reads out.grad and accumulates (+=) into the inputs' grad buffers.
  std::function<void(const Payload<T>& out)> apply;
};

bool& grad_mode_flag();

}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

// Disables tape recording on the current thread for its lifetime.
struct NoGradGuard {
  NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Dense row-major tensor (last index fastest). Handles share the payload;
// every op returns a new payload, so values already produced never mutate.
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(Shape shape, T fill = T(0), bool requires_grad = false)
      : p_(std::make_shared<detail::Payload<T>>()) {
    p_->shape = std::move(shape);
    p_->value.assign(shape_numel(p_->shape), fill);
    p_->requires_grad = requires_grad;
  }

  TensorT(Shape shape, std::vector<T> values, bool requires_grad = false)
      : p_(std::make_shared<detail::Payload<T>>()) {
    if (shape_numel(shape) != values.size())
      throw UsageError("tensor data size " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
    p_->shape = std::move(shape);
    p_->value = std::move(values);
    p_->requires_grad = requires_grad;
  }

  static TensorT zeros(Shape shape) { return TensorT(std::move(shape)); }
  static TensorT full(Shape shape, T v) { return TensorT(std::move(shape), v); }
  static TensorT scalar(T v) { return TensorT(Shape{1}, std::vector<T>{v}); }

  bool defined() const { return p_ != nullptr; }
  const Shape& shape() const { return p_->shape; }
  std::size_t rank() const { return p_->shape.size(); }
  std::size_t numel() const { return p_->value.size(); }
  std::size_t extent(std::size_t axis) const { return p_->shape.at(axis); }

  std::span<const T> data() const { return p_->value; }
  // Direct mutation is for leaves only (parameter updates, file loaders);
  // mutating an op output would corrupt any recorded graph through it.
  std::span<T> raw_data() { return p_->value; }

  T item() const {
    if (numel() != 1) throw UsageError("item() on tensor of " + std::to_string(numel()) + " elements");
    return p_->value[0];
  }

  bool requires_grad() const { return p_->requires_grad; }
  TensorT& set_requires_grad(bool flag) {
    p_->requires_grad = flag;
    return *this;
  }
  bool needs_grad() const { return p_ && p_->needs_grad(); }

  bool has_grad() const { return p_ && !p_->grad.empty(); }
  std::span<const T> grad() const { return p_->grad; }
  std::span<T> grad_mut() {
    p_->ensure_grad();
    return p_->grad;
  }
  void zero_grad() {
    if (p_) p_->grad.assign(p_->value.size(), T(0));
  }

  std::shared_ptr<detail::Payload<T>> payload() const { return p_; }

 private:
  std::shared_ptr<detail::Payload<T>> p_;
};

using Tensor = TensorT<float>;

template <typename T>
bool all_finite(const TensorT<T>& t) {
  for (T v : t.data())
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

namespace detail {

// Attaches a grad node to `out` when recording is on and some input needs a
// gradient. `apply` accumulates into the inputs it captured.
template <typename T>
void attach_node(TensorT<T>& out, const char* op,
                 std::vector<std::shared_ptr<Payload<T>>> inputs,
                 std::function<void(const Payload<T>&)> apply) {
  if (!grad_enabled()) return;
  bool any = false;
  for (const auto& in : inputs)
    if (in && in->needs_grad()) any = true;
  if (!any) return;
  auto node = std::make_shared<GradNode<T>>();
  node->op = op;
  node->inputs = std::move(inputs);
  node->apply = std::move(apply);
  out.payload()->node = std::move(node);
}

}  // namespace detail

// Reverse-mode sweep from a scalar loss. Gradients sum at fan-out. The graph
// is consumed unless retain_graph is set.
template <typename T>
void backward(const TensorT<T>& loss, bool retain_graph = false) {
  if (!loss.defined()) throw UsageError("backward on undefined tensor");
  if (loss.numel() != 1) throw UsageError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));

  using P = detail::Payload<T>;
  // Iterative post-order DFS over producer nodes.
  std::vector<std::shared_ptr<P>> order;
  std::unordered_set<P*> visited;
  std::vector<std::pair<std::shared_ptr<P>, std::size_t>> stack;
  stack.emplace_back(loss.payload(), 0);
  visited.insert(loss.payload().get());
  while (!stack.empty()) {
    auto& [p, next] = stack.back();
    if (p->node && next < p->node->inputs.size()) {
      auto child = p->node->inputs[next++];
      if (child && child->node && !visited.count(child.get())) {
        visited.insert(child.get());
        stack.emplace_back(std::move(child), 0);
      }
    } else {
      order.push_back(p);
      stack.pop_back();
    }
  }

  // Producer-owned gradients are scratch space for this sweep; only leaf
  // gradients persist and accumulate across sweeps.
  for (auto& p : order)
    if (p->node && !p->grad.empty()) std::fill(p->grad.begin(), p->grad.end(), T(0));

  loss.payload()->ensure_grad();
  loss.payload()->grad[0] = T(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto& p = *it;
    if (!p->node) continue;
    p->ensure_grad();
    p->node->apply(*p);
    if (!retain_graph) p->node.reset();
  }
}

}  // namespace tabs
