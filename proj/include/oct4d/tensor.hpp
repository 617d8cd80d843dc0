#ifndef OCT4D_TENSOR_HPP
#define OCT4D_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "oct4d/common.hpp"
#include "oct4d/profile.hpp"

namespace oct4d {

// Reverse-mode autodiff over contiguous row-major N-d arrays.
//
// A Tensor is a shared handle to a node. Ops (ops.hpp) create result nodes
// that remember their parents and a closure propagating the result's grad
// into the parents' grads. backward() on a scalar walks the graph once in
// reverse topological order, then frees the graph (parents and closures);
// grads stay on the nodes. Grad buffers accumulate across backward calls
// until explicitly zeroed.
//
// T is float in training mode and double in verification mode.

namespace detail {
inline thread_local bool g_grad_enabled = true;
}

// Disables graph recording in the current thread while alive (inference).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::g_grad_enabled) { detail::g_grad_enabled = false; }
  ~NoGradGuard() { detail::g_grad_enabled = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline bool grad_enabled() { return detail::g_grad_enabled; }

template <typename T>
struct TensorImpl {
  std::vector<int64_t> shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorImpl<T>>> parents;
  std::function<void(TensorImpl<T>&)> backward_fn;

  int64_t numel() const { return static_cast<int64_t>(data.size()); }

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
  }
};

template <typename T>
class Tensor {
 public:
  using Scalar = T;

  Tensor() = default;

  static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false) {
    return full(std::move(shape), T(0), requires_grad);
  }

  static Tensor full(std::vector<int64_t> shape, T value, bool requires_grad = false) {
    for (int64_t d : shape)
      if (d <= 0) fail_contract("tensor extent must be positive, got shape ", shape_str(shape));
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->data.assign(static_cast<size_t>(numel_of(shape)), value);
    impl->shape = std::move(shape);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
  }

  static Tensor from_vector(std::vector<int64_t> shape, std::vector<T> values,
                            bool requires_grad = false) {
    if (numel_of(shape) != static_cast<int64_t>(values.size()))
      fail_contract("data length ", values.size(), " does not match shape ", shape_str(shape));
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
  }

  static Tensor scalar(T value) { return full({}, value); }

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int64_t>& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int64_t numel() const { return impl_->numel(); }
  int64_t size(int axis) const { return impl_->shape.at(axis); }

  T* data() { return impl_->data.data(); }
  const T* data() const { return impl_->data.data(); }
  std::vector<T>& data_vec() { return impl_->data; }
  const std::vector<T>& data_vec() const { return impl_->data; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool v) {
    if (v && (impl_->backward_fn || !impl_->parents.empty()))
      fail_contract("requires_grad can only be toggled on leaf tensors");
    impl_->requires_grad = v;
  }

  bool has_grad() const { return !impl_->grad.empty(); }
  T* grad() { return impl_->grad.data(); }
  const T* grad() const { return impl_->grad.data(); }
  std::vector<T>& grad_vec() { return impl_->grad; }
  const std::vector<T>& grad_vec() const { return impl_->grad; }

  void zero_grad() {
    if (has_grad()) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
  }

  T item() const {
    if (numel() != 1) fail_contract("item() on tensor of ", numel(), " elements");
    return impl_->data[0];
  }

  // Element access by multi-index (test/debug convenience, not a hot path).
  T at(std::initializer_list<int64_t> idx) const {
    return impl_->data[flat_index(idx)];
  }
  T& at(std::initializer_list<int64_t> idx) { return impl_->data[flat_index(idx)]; }

  bool all_finite() const {
    for (T v : impl_->data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  // Reverse-mode sweep from a scalar. Frees the graph afterwards; grads are
  // kept and accumulate over subsequent sweeps until zeroed.
  void backward() {
    if (numel() != 1) fail_contract("backward() requires a scalar loss, got shape ", shape_str(shape()));
    std::vector<TensorImpl<T>*> order = topo_order();
    impl_->ensure_grad();
    impl_->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      TensorImpl<T>* node = *it;
      if (node->backward_fn) node->backward_fn(*node);
    }
    for (TensorImpl<T>* node : order) {
      node->backward_fn = nullptr;
      node->parents.clear();
    }
  }

  std::shared_ptr<TensorImpl<T>>& impl() { return impl_; }
  const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }

  explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}

 private:
  int64_t flat_index(std::initializer_list<int64_t> idx) const {
    if (static_cast<int>(idx.size()) != rank())
      fail_contract("index rank ", idx.size(), " vs tensor rank ", rank());
    int64_t flat = 0;
    int axis = 0;
    for (int64_t i : idx) {
      if (i < 0 || i >= impl_->shape[axis])
        fail_contract("index ", i, " out of range for axis ", axis, " extent ", impl_->shape[axis]);
      flat = flat * impl_->shape[axis] + i;
      ++axis;
    }
    return flat;
  }

  // Iterative post-order DFS; recursion depth would be fine for our graphs
  // but an explicit stack costs nothing.
  std::vector<TensorImpl<T>*> topo_order() {
    std::vector<TensorImpl<T>*> order;
    std::unordered_set<TensorImpl<T>*> seen;
    std::vector<std::pair<TensorImpl<T>*, size_t>> stack;
    stack.emplace_back(impl_.get(), 0);
    seen.insert(impl_.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        TensorImpl<T>* p = node->parents[next++].get();
        if (seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    return order;
  }

  std::shared_ptr<TensorImpl<T>> impl_;
};

namespace detail {

// Result-node builder shared by all ops. Parents and the backward closure
// are only recorded when the result actually needs a gradient.
template <typename T>
Tensor<T> make_op_node(std::vector<int64_t> shape,
                       std::vector<Tensor<T>> parents,
                       std::function<void(TensorImpl<T>&)> backward_fn) {
  prof::Scope ps(prof::kAlloc);
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->data.assign(static_cast<size_t>(numel_of(shape)), T(0));
  impl->shape = std::move(shape);
  bool needs = false;
  if (grad_enabled())
    for (const auto& p : parents) needs = needs || p.requires_grad();
  if (needs) {
    impl->requires_grad = true;
    impl->backward_fn = std::move(backward_fn);
    impl->parents.reserve(parents.size());
    for (auto& p : parents) impl->parents.push_back(p.impl());
  }
  return Tensor<T>(std::move(impl));
}

}  // namespace detail

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace oct4d

#endif
