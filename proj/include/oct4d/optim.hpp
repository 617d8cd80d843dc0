#ifndef OCT4D_OPTIM_HPP
#define OCT4D_OPTIM_HPP

#include <cmath>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "oct4d/rng.hpp"
#include "oct4d/tensor.hpp"

namespace oct4d {

// Ordered name -> parameter map. Iteration follows insertion order, which
// fixes the update and initialization order for reproducibility.
template <typename T>
class ParameterStore {
 public:
  Tensor<T>& add(const std::string& name, Tensor<T> t) {
    if (index_.count(name)) fail_contract("duplicate parameter name: ", name);
    t.set_requires_grad(true);
    index_[name] = entries_.size();
    entries_.emplace_back(name, std::move(t));
    return entries_.back().second;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<T>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) fail_contract("unknown parameter: ", name);
    return entries_[it->second].second;
  }
  const Tensor<T>& get(const std::string& name) const {
    return const_cast<ParameterStore*>(this)->get(name);
  }

  size_t size() const { return entries_.size(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  int64_t total_params() const {
    int64_t n = 0;
    for (const auto& [name, t] : entries_) n += t.numel();
    return n;
  }

  void zero_grads() {
    for (auto& [name, t] : entries_) t.zero_grad();
  }

  std::vector<std::vector<T>> snapshot() const {
    std::vector<std::vector<T>> s;
    s.reserve(entries_.size());
    for (const auto& [name, t] : entries_) s.push_back(t.data_vec());
    return s;
  }

  void restore(const std::vector<std::vector<T>>& s) {
    if (s.size() != entries_.size()) fail_contract("snapshot size mismatch");
    for (size_t i = 0; i < s.size(); ++i) {
      if (s[i].size() != entries_[i].second.data_vec().size())
        fail_contract("snapshot shape mismatch at ", entries_[i].first);
      entries_[i].second.data_vec() = s[i];
    }
  }

  uint64_t fingerprint() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [name, t] : entries_) {
      h = fnv1a64(name.data(), name.size(), h);
      h = fnv1a64(t.data(), sizeof(T) * t.numel(), h);
    }
    return h;
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::unordered_map<std::string, size_t> index_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment buffers, allocated to match the store on first step.
template <typename T>
struct AdamState {
  AdamConfig cfg;
  int64_t t = 0;
  std::vector<std::vector<T>> m, v;

  explicit AdamState(AdamConfig c = {}) : cfg(c) {}
};

// One standard bias-corrected Adam update over every parameter, in store
// order. Requires every gradient to be populated; zeroes grads afterwards.
template <typename T>
void adam_step(ParameterStore<T>& params, AdamState<T>& state) {
  if (state.m.empty()) {
    for (const auto& [name, t] : params) {
      state.m.emplace_back(t.numel(), T(0));
      state.v.emplace_back(t.numel(), T(0));
    }
  }
  if (state.m.size() != params.size())
    fail_contract("adam state tracks ", state.m.size(), " parameters, store has ", params.size());
  state.t += 1;
  const T b1 = static_cast<T>(state.cfg.beta1);
  const T b2 = static_cast<T>(state.cfg.beta2);
  const T lr = static_cast<T>(state.cfg.lr);
  const T eps = static_cast<T>(state.cfg.eps);
  const T bc1 = T(1) - static_cast<T>(std::pow(state.cfg.beta1, static_cast<double>(state.t)));
  const T bc2 = T(1) - static_cast<T>(std::pow(state.cfg.beta2, static_cast<double>(state.t)));

  size_t pi = 0;
  for (auto& [name, t] : params) {
    if (!t.has_grad())
      fail_contract("adam_step: gradient missing for parameter '", name, "'");
    T* w = t.data();
    T* g = t.grad();
    T* m = state.m[pi].data();
    T* v = state.v[pi].data();
    for (int64_t i = 0, n = t.numel(); i < n; ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      T mhat = m[i] / bc1;
      T vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    t.zero_grad();
    ++pi;
  }
}

// Fan-in-scaled normal init (variance 2/fan_in) for weights, zeros for
// biases. Each parameter draws from its own stream derived from (seed,
// position), so values do not shift when other parameters are resized.
template <typename T>
void init_fan_in(ParameterStore<T>& params, uint64_t seed) {
  size_t pi = 0;
  for (auto& [name, t] : params) {
    bool is_bias = name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0;
    if (is_bias || t.rank() < 2) {
      std::fill(t.data_vec().begin(), t.data_vec().end(), T(0));
    } else {
      // fan_in = in_channels * kernel taps = numel / out_channels
      int64_t fan_in = t.numel() / t.shape()[0];
      double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
      Rng rng(derive_seed(seed, 0x1217, pi));
      for (auto& w : t.data_vec()) w = static_cast<T>(rng.normal(0.0, stddev));
    }
    ++pi;
  }
}

}  // namespace oct4d

#endif
