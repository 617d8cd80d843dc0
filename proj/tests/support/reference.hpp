#ifndef OCT4D_TESTS_REFERENCE_HPP
#define OCT4D_TESTS_REFERENCE_HPP

// Independent reference implementations used as test oracles. Everything
// here is deliberately written as plain nested loops over multi-indices,
// sharing no code with the optimized lowering it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "oct4d/tensor.hpp"

namespace oct4d::testref {

// Direct cross-correlation: out[b,co,o...] = bias[co] +
//   sum_ci sum_k w[co,ci,k...] * x[b,ci,o*s - p + k].
// Rank k in {3,4}; indices walked one dim at a time.
template <typename T>
Tensor<T> naive_conv(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                     const std::vector<int64_t>& stride, const std::vector<int64_t>& pad) {
  int k = static_cast<int>(stride.size());
  int64_t B = x.shape()[0], Cin = x.shape()[1], Cout = w.shape()[0];
  std::vector<int64_t> D(x.shape().begin() + 2, x.shape().end());
  std::vector<int64_t> K(w.shape().begin() + 2, w.shape().end());
  std::vector<int64_t> O(k);
  for (int d = 0; d < k; ++d) O[d] = (D[d] + 2 * pad[d] - K[d]) / stride[d] + 1;

  std::vector<int64_t> out_shape = {B, Cout};
  out_shape.insert(out_shape.end(), O.begin(), O.end());
  auto out = Tensor<T>::zeros(out_shape);

  std::vector<int64_t> oidx(k, 0), kidx(k, 0);
  auto advance = [](std::vector<int64_t>& idx, const std::vector<int64_t>& lim) {
    for (int d = static_cast<int>(idx.size()) - 1; d >= 0; --d) {
      if (++idx[d] < lim[d]) return true;
      idx[d] = 0;
    }
    return false;
  };

  for (int64_t bi = 0; bi < B; ++bi)
    for (int64_t co = 0; co < Cout; ++co) {
      std::fill(oidx.begin(), oidx.end(), 0);
      do {
        T acc = b.numel() ? b.data()[co] : T(0);
        for (int64_t ci = 0; ci < Cin; ++ci) {
          std::fill(kidx.begin(), kidx.end(), 0);
          do {
            int64_t xflat = bi * Cin + ci;
            bool inside = true;
            for (int d = 0; d < k && inside; ++d) {
              int64_t pos = oidx[d] * stride[d] - pad[d] + kidx[d];
              if (pos < 0 || pos >= D[d]) inside = false;
              xflat = xflat * D[d] + pos;
            }
            if (inside) {
              int64_t wflat = co * Cin + ci;
              for (int d = 0; d < k; ++d) wflat = wflat * K[d] + kidx[d];
              T xv = x.data()[xflat];
              acc += w.data()[wflat] * xv;
            }
          } while (advance(kidx, K));
        }
        int64_t oflat = bi * Cout + co;
        for (int d = 0; d < k; ++d) oflat = oflat * O[d] + oidx[d];
        out.data()[oflat] = acc;
      } while (advance(oidx, O));
    }
  return out;
}

template <typename T>
Tensor<T> naive_avg_pool(const Tensor<T>& x, const std::vector<int64_t>& window,
                         const std::vector<int64_t>& stride) {
  int k = static_cast<int>(window.size());
  int64_t B = x.shape()[0], C = x.shape()[1];
  std::vector<int64_t> D(x.shape().begin() + 2, x.shape().end());
  std::vector<int64_t> O(k);
  for (int d = 0; d < k; ++d) O[d] = (D[d] - window[d]) / stride[d] + 1;
  std::vector<int64_t> out_shape = {B, C};
  out_shape.insert(out_shape.end(), O.begin(), O.end());
  auto out = Tensor<T>::zeros(out_shape);

  std::vector<int64_t> oidx(k, 0), widx(k, 0);
  auto advance = [](std::vector<int64_t>& idx, const std::vector<int64_t>& lim) {
    for (int d = static_cast<int>(idx.size()) - 1; d >= 0; --d) {
      if (++idx[d] < lim[d]) return true;
      idx[d] = 0;
    }
    return false;
  };
  int64_t wcount = 1;
  for (int d = 0; d < k; ++d) wcount *= window[d];

  for (int64_t bc = 0; bc < B * C; ++bc) {
    std::fill(oidx.begin(), oidx.end(), 0);
    do {
      T acc = 0;
      std::fill(widx.begin(), widx.end(), 0);
      do {
        int64_t xflat = bc;
        for (int d = 0; d < k; ++d) xflat = xflat * D[d] + oidx[d] * stride[d] + widx[d];
        acc += x.data()[xflat];
      } while (advance(widx, window));
      int64_t oflat = bc;
      for (int d = 0; d < k; ++d) oflat = oflat * O[d] + oidx[d];
      out.data()[oflat] = acc / static_cast<T>(wcount);
    } while (advance(oidx, O));
  }
  return out;
}

inline double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0;
  for (int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

inline float max_abs_diff(const Tensor<float>& a, const Tensor<float>& b) {
  float m = 0;
  for (int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// Central-difference gradient check. `loss_fn` rebuilds the graph from
// current parameter values and returns the scalar loss. Returns the max
// relative error over all checked entries, with rel = |a-n| / max(|a|,|n|,1).
struct GradCheckResult {
  double max_rel_err = 0;
  int64_t checked = 0;
};

inline GradCheckResult finite_diff_check(const std::vector<Tensor<double>>& params,
                                         const std::function<Tensor<double>()>& loss_fn,
                                         double h = 1e-5) {
  for (auto p : params) {
    auto q = p;
    q.zero_grad();
  }
  auto loss = loss_fn();
  loss.backward();
  GradCheckResult res;
  for (auto p : params) {
    for (int64_t i = 0; i < p.numel(); ++i) {
      double analytic = p.has_grad() ? p.grad()[i] : 0.0;
      double orig = p.data()[i];
      p.data()[i] = orig + h;
      double fp;
      {
        NoGradGuard ng;
        fp = loss_fn().item();
      }
      p.data()[i] = orig - h;
      double fm;
      {
        NoGradGuard ng;
        fm = loss_fn().item();
      }
      p.data()[i] = orig;
      double numeric = (fp - fm) / (2 * h);
      double rel = std::abs(analytic - numeric) /
                   std::max({std::abs(analytic), std::abs(numeric), 1.0});
      res.max_rel_err = std::max(res.max_rel_err, rel);
      res.checked++;
    }
  }
  return res;
}

// --- small statistics helpers ---

inline double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double stddev_of(const std::vector<double>& v) {
  double m = mean_of(v), s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = mean_of(a), mb = mean_of(b);
  double num = 0, da = 0, db = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    da += (a[i] - ma) * (a[i] - ma);
    db += (b[i] - mb) * (b[i] - mb);
  }
  return num / std::sqrt(da * db);
}

inline std::vector<double> ranks_of(const std::vector<double>& v) {
  std::vector<size_t> idx(v.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t t = i; t <= j; ++t) r[idx[t]] = avg;
    i = j + 1;
  }
  return r;
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(ranks_of(a), ranks_of(b));
}

}  // namespace oct4d::testref

#endif
