#ifndef OCT4D_OPS_HPP
#define OCT4D_OPS_HPP

#include <array>
#include <cstring>
#include <numeric>
#include <vector>

#include "oct4d/gemm.hpp"
#include "oct4d/parallel.hpp"
#include "oct4d/profile.hpp"
#include "oct4d/tensor.hpp"

namespace oct4d {

// Differentiable ops. Layout convention everywhere: [batch, channels,
// spatial/temporal dims...], row-major, last dim fastest. Rank-4 convolution
// treats the first post-channel dim as temporal: [B, C, T, X, Y, Z].

namespace detail {

template <typename T>
void accumulate_grad(const std::shared_ptr<TensorImpl<T>>& node, const T* g, int64_t n,
                     int64_t offset = 0) {
  if (!node->requires_grad) return;
  node->ensure_grad();
  T* dst = node->grad.data() + offset;
  for (int64_t i = 0; i < n; ++i) dst[i] += g[i];
}

inline void check_axis(int axis, int rank) {
  if (axis < 0 || axis >= rank)
    fail_contract("axis ", axis, " out of range for rank-", rank, " tensor");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise / structural ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  auto out = detail::make_op_node<T>(
      x.shape(), {x}, [xi = x.impl()](TensorImpl<T>& self) {
        if (!xi->requires_grad) return;
        prof::Scope ps(prof::kRelu);
        xi->ensure_grad();
        const T* g = self.grad.data();
        const T* v = xi->data.data();
        T* dx = xi->grad.data();
        int64_t n = xi->numel();
        for (int64_t i = 0; i < n; ++i)
          if (v[i] > T(0)) dx[i] += g[i];
      });
  prof::Scope ps(prof::kRelu);
  const T* in = x.data();
  T* o = out.data();
  int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) o[i] = in[i] > T(0) ? in[i] : T(0);
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    fail_contract("add: shape mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape()));
  auto out = detail::make_op_node<T>(
      a.shape(), {a, b}, [ai = a.impl(), bi = b.impl()](TensorImpl<T>& self) {
        detail::accumulate_grad(ai, self.grad.data(), self.numel());
        detail::accumulate_grad(bi, self.grad.data(), self.numel());
      });
  const T* pa = a.data();
  const T* pb = b.data();
  T* o = out.data();
  for (int64_t i = 0, n = a.numel(); i < n; ++i) o[i] = pa[i] + pb[i];
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    fail_contract("sub: shape mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape()));
  auto out = detail::make_op_node<T>(
      a.shape(), {a, b}, [ai = a.impl(), bi = b.impl()](TensorImpl<T>& self) {
        detail::accumulate_grad(ai, self.grad.data(), self.numel());
        if (bi->requires_grad) {
          bi->ensure_grad();
          for (int64_t i = 0, n = self.numel(); i < n; ++i) bi->grad[i] -= self.grad[i];
        }
      });
  const T* pa = a.data();
  const T* pb = b.data();
  T* o = out.data();
  for (int64_t i = 0, n = a.numel(); i < n; ++i) o[i] = pa[i] - pb[i];
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    fail_contract("mul: shape mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape()));
  auto out = detail::make_op_node<T>(
      a.shape(), {a, b}, [ai = a.impl(), bi = b.impl()](TensorImpl<T>& self) {
        int64_t n = self.numel();
        if (ai->requires_grad) {
          ai->ensure_grad();
          for (int64_t i = 0; i < n; ++i) ai->grad[i] += self.grad[i] * bi->data[i];
        }
        if (bi->requires_grad) {
          bi->ensure_grad();
          for (int64_t i = 0; i < n; ++i) bi->grad[i] += self.grad[i] * ai->data[i];
        }
      });
  const T* pa = a.data();
  const T* pb = b.data();
  T* o = out.data();
  for (int64_t i = 0, n = a.numel(); i < n; ++i) o[i] = pa[i] * pb[i];
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  auto out = detail::make_op_node<T>(
      a.shape(), {a}, [ai = a.impl(), factor](TensorImpl<T>& self) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (int64_t i = 0, n = self.numel(); i < n; ++i) ai->grad[i] += factor * self.grad[i];
      });
  const T* pa = a.data();
  T* o = out.data();
  for (int64_t i = 0, n = a.numel(); i < n; ++i) o[i] = factor * pa[i];
  return out;
}

// Total reduction to a rank-0 scalar.
template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  auto out = detail::make_op_node<T>(
      {}, {a}, [ai = a.impl()](TensorImpl<T>& self) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        T g = self.grad[0];
        for (int64_t i = 0, n = ai->numel(); i < n; ++i) ai->grad[i] += g;
      });
  const T* pa = a.data();
  T acc = 0;
  for (int64_t i = 0, n = a.numel(); i < n; ++i) acc += pa[i];
  out.data()[0] = acc;
  return out;
}

// Contiguous range along one axis.
template <typename T>
Tensor<T> slice(const Tensor<T>& a, int axis, int64_t start, int64_t len) {
  detail::check_axis(axis, a.rank());
  int64_t extent = a.shape()[axis];
  if (start < 0 || len <= 0 || start + len > extent)
    fail_contract("slice [", start, ",", start + len, ") out of range for axis ", axis,
                  " extent ", extent);
  std::vector<int64_t> out_shape = a.shape();
  out_shape[axis] = len;
  int64_t inner = 1;
  for (int i = axis + 1; i < a.rank(); ++i) inner *= a.shape()[i];
  int64_t outer = a.numel() / (extent * inner);

  auto out = detail::make_op_node<T>(
      out_shape, {a},
      [ai = a.impl(), outer, inner, extent, start, len](TensorImpl<T>& self) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        const T* g = self.grad.data();
        for (int64_t o = 0; o < outer; ++o) {
          T* dst = ai->grad.data() + (o * extent + start) * inner;
          const T* src = g + o * len * inner;
          for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
      });
  T* o = out.data();
  const T* src = a.data();
  for (int64_t ob = 0; ob < outer; ++ob)
    std::memcpy(o + ob * len * inner, src + (ob * extent + start) * inner,
                sizeof(T) * len * inner);
  return out;
}

// Concatenation along an existing axis; argument order is preserved.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) fail_contract("concat: no inputs");
  int rank = parts[0].rank();
  detail::check_axis(axis, rank);
  int64_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank)
      fail_contract("concat: rank mismatch ", p.rank(), " vs ", rank);
    for (int d = 0; d < rank; ++d)
      if (d != axis && p.shape()[d] != parts[0].shape()[d])
        fail_contract("concat: inputs differ on non-concat axis ", d, ": ",
                      shape_str(p.shape()), " vs ", shape_str(parts[0].shape()));
    total += p.shape()[axis];
  }
  std::vector<int64_t> out_shape = parts[0].shape();
  out_shape[axis] = total;
  int64_t inner = 1;
  for (int i = axis + 1; i < rank; ++i) inner *= out_shape[i];
  int64_t outer = numel_of(out_shape) / (total * inner);

  std::vector<std::shared_ptr<TensorImpl<T>>> impls;
  std::vector<int64_t> extents;
  for (const auto& p : parts) {
    impls.push_back(p.impl());
    extents.push_back(p.shape()[axis]);
  }
  auto out = detail::make_op_node<T>(
      out_shape, parts,
      [impls, extents, outer, inner, total](TensorImpl<T>& self) {
        const T* g = self.grad.data();
        int64_t offset = 0;
        for (size_t pi = 0; pi < impls.size(); ++pi) {
          int64_t ext = extents[pi];
          if (impls[pi]->requires_grad) {
            impls[pi]->ensure_grad();
            for (int64_t o = 0; o < outer; ++o) {
              const T* src = g + (o * total + offset) * inner;
              T* dst = impls[pi]->grad.data() + o * ext * inner;
              for (int64_t i = 0; i < ext * inner; ++i) dst[i] += src[i];
            }
          }
          offset += ext;
        }
      });
  prof::Scope ps(prof::kConcat);
  T* o = out.data();
  int64_t offset = 0;
  for (const auto& p : parts) {
    int64_t ext = p.shape()[axis];
    for (int64_t ob = 0; ob < outer; ++ob)
      std::memcpy(o + (ob * total + offset) * inner, p.data() + ob * ext * inner,
                  sizeof(T) * ext * inner);
    offset += ext;
  }
  return out;
}

// Stacks equally shaped tensors along a fresh axis inserted at `axis`
// (temporal reassembly: five [B,C,X,Y,Z] -> [B,C,5,X,Y,Z] with axis=2).
template <typename T>
Tensor<T> stack(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) fail_contract("stack: no inputs");
  int rank = parts[0].rank();
  if (axis < 0 || axis > rank) fail_contract("stack: axis ", axis, " out of range");
  for (const auto& p : parts)
    if (p.shape() != parts[0].shape())
      fail_contract("stack: shape mismatch ", shape_str(p.shape()), " vs ",
                    shape_str(parts[0].shape()));
  std::vector<int64_t> out_shape = parts[0].shape();
  out_shape.insert(out_shape.begin() + axis, static_cast<int64_t>(parts.size()));
  int64_t inner = 1;
  for (int i = axis; i < rank; ++i) inner *= parts[0].shape()[i];
  int64_t outer = parts[0].numel() / inner;
  int64_t count = static_cast<int64_t>(parts.size());

  std::vector<std::shared_ptr<TensorImpl<T>>> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  auto out = detail::make_op_node<T>(
      out_shape, parts, [impls, outer, inner, count](TensorImpl<T>& self) {
        const T* g = self.grad.data();
        for (int64_t pi = 0; pi < count; ++pi) {
          if (!impls[pi]->requires_grad) continue;
          impls[pi]->ensure_grad();
          for (int64_t o = 0; o < outer; ++o) {
            const T* src = g + (o * count + pi) * inner;
            T* dst = impls[pi]->grad.data() + o * inner;
            for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
          }
        }
      });
  T* o = out.data();
  for (int64_t pi = 0; pi < count; ++pi)
    for (int64_t ob = 0; ob < outer; ++ob)
      std::memcpy(o + (ob * count + pi) * inner, parts[pi].data() + ob * inner,
                  sizeof(T) * inner);
  return out;
}

// ---------------------------------------------------------------------------
// linear / pooling
// ---------------------------------------------------------------------------

// out[B,O] = x[B,F] * w[O,F]^T + b[O]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.rank() != 2 || w.rank() != 2)
    fail_contract("linear: expected rank-2 input/weight, got ", shape_str(x.shape()), " and ",
                  shape_str(w.shape()));
  int64_t B = x.shape()[0], F = x.shape()[1], O = w.shape()[0];
  if (w.shape()[1] != F)
    fail_contract("linear: feature dim mismatch, input has ", F, " weight expects ",
                  w.shape()[1]);
  if (b.numel() != O) fail_contract("linear: bias size ", b.numel(), " vs out features ", O);

  auto out = detail::make_op_node<T>(
      {B, O}, {x, w, b},
      [xi = x.impl(), wi = w.impl(), bi = b.impl(), B, F, O](TensorImpl<T>& self) {
        const T* g = self.grad.data();
        if (xi->requires_grad) {
          xi->ensure_grad();
          for (int64_t i = 0; i < B; ++i)
            for (int64_t o = 0; o < O; ++o) {
              T gv = g[i * O + o];
              const T* wr = wi->data.data() + o * F;
              T* dx = xi->grad.data() + i * F;
              for (int64_t f = 0; f < F; ++f) dx[f] += gv * wr[f];
            }
        }
        if (wi->requires_grad) {
          wi->ensure_grad();
          for (int64_t i = 0; i < B; ++i)
            for (int64_t o = 0; o < O; ++o) {
              T gv = g[i * O + o];
              const T* xr = xi->data.data() + i * F;
              T* dw = wi->grad.data() + o * F;
              for (int64_t f = 0; f < F; ++f) dw[f] += gv * xr[f];
            }
        }
        if (bi->requires_grad) {
          bi->ensure_grad();
          for (int64_t i = 0; i < B; ++i)
            for (int64_t o = 0; o < O; ++o) bi->grad[o] += g[i * O + o];
        }
      });
  prof::Scope ps(prof::kLinear);
  T* o = out.data();
  for (int64_t i = 0; i < B; ++i)
    for (int64_t j = 0; j < O; ++j) {
      const T* xr = x.data() + i * F;
      const T* wr = w.data() + j * F;
      T acc = b.data()[j];
      for (int64_t f = 0; f < F; ++f) acc += xr[f] * wr[f];
      o[i * O + j] = acc;
    }
  return out;
}

// Mean over every non-batch, non-channel dim: [B,C,...] -> [B,C].
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  if (x.rank() < 3)
    fail_contract("global_avg_pool: need at least one pooled dim, got ", shape_str(x.shape()));
  int64_t B = x.shape()[0], C = x.shape()[1];
  int64_t P = x.numel() / (B * C);
  auto out = detail::make_op_node<T>(
      {B, C}, {x}, [xi = x.impl(), B, C, P](TensorImpl<T>& self) {
        if (!xi->requires_grad) return;
        xi->ensure_grad();
        T inv = T(1) / static_cast<T>(P);
        for (int64_t bc = 0; bc < B * C; ++bc) {
          T g = self.grad[bc] * inv;
          T* dst = xi->grad.data() + bc * P;
          for (int64_t i = 0; i < P; ++i) dst[i] += g;
        }
      });
  T* o = out.data();
  const T* in = x.data();
  for (int64_t bc = 0; bc < B * C; ++bc) {
    T acc = 0;
    const T* src = in + bc * P;
    for (int64_t i = 0; i < P; ++i) acc += src[i];
    o[bc] = acc / static_cast<T>(P);
  }
  return out;
}

namespace detail {

// Normalizes a rank-3 spatial problem to rank 4 by a leading unit dim, so
// pooling and convolution have a single generic implementation.
struct Dims4 {
  std::array<int64_t, 4> d;
  int64_t prod() const { return d[0] * d[1] * d[2] * d[3]; }
};

inline Dims4 lift4(const std::vector<int64_t>& v, int64_t fill) {
  Dims4 r{{fill, fill, fill, fill}};
  size_t k = v.size();
  for (size_t i = 0; i < k; ++i) r.d[4 - k + i] = v[i];
  return r;
}

}  // namespace detail

// Mean pooling with window/stride vectors (rank 3 or 4 spatial part, no
// padding; every window lies fully inside the input).
template <typename T>
Tensor<T> avg_pool_nd(const Tensor<T>& x, const std::vector<int64_t>& window,
                      const std::vector<int64_t>& stride) {
  int k = static_cast<int>(window.size());
  if (k != 3 && k != 4)
    fail_contract("avg_pool_nd: unsupported rank ", k, " (supported: 3, 4)");
  if (x.rank() != k + 2)
    fail_contract("avg_pool_nd: input rank ", x.rank(), " does not match window rank ", k);
  if (static_cast<int>(stride.size()) != k)
    fail_contract("avg_pool_nd: stride rank ", stride.size(), " vs window rank ", k);
  int64_t B = x.shape()[0], C = x.shape()[1];
  std::vector<int64_t> spatial(x.shape().begin() + 2, x.shape().end());
  std::vector<int64_t> out_spatial(k);
  for (int d = 0; d < k; ++d) {
    if (window[d] < 1 || stride[d] < 1)
      fail_contract("avg_pool_nd: window/stride must be >= 1 on dim ", d);
    if (window[d] > spatial[d])
      fail_contract("avg_pool_nd: window ", window[d], " larger than input extent ", spatial[d],
                    " on dim ", d);
    out_spatial[d] = (spatial[d] - window[d]) / stride[d] + 1;
  }
  std::vector<int64_t> out_shape = {B, C};
  out_shape.insert(out_shape.end(), out_spatial.begin(), out_spatial.end());

  auto in4 = detail::lift4(spatial, 1);
  auto out4 = detail::lift4(out_spatial, 1);
  auto win4 = detail::lift4(window, 1);
  auto str4 = detail::lift4(stride, 1);
  int64_t wcount = win4.prod();
  T inv = T(1) / static_cast<T>(wcount);
  int64_t in_plane = in4.prod();
  int64_t out_plane = out4.prod();

  auto pool_loop = [=](const T* src, T* dst, bool backward) {
    // backward: dst is input grad, src is output grad.
    for (int64_t o0 = 0; o0 < out4.d[0]; ++o0)
      for (int64_t o1 = 0; o1 < out4.d[1]; ++o1)
        for (int64_t o2 = 0; o2 < out4.d[2]; ++o2)
          for (int64_t o3 = 0; o3 < out4.d[3]; ++o3) {
            int64_t oidx = ((o0 * out4.d[1] + o1) * out4.d[2] + o2) * out4.d[3] + o3;
            int64_t base0 = o0 * str4.d[0], base1 = o1 * str4.d[1];
            int64_t base2 = o2 * str4.d[2], base3 = o3 * str4.d[3];
            if (!backward) {
              T acc = 0;
              for (int64_t w0 = 0; w0 < win4.d[0]; ++w0)
                for (int64_t w1 = 0; w1 < win4.d[1]; ++w1)
                  for (int64_t w2 = 0; w2 < win4.d[2]; ++w2) {
                    const T* row = src + (((base0 + w0) * in4.d[1] + base1 + w1) * in4.d[2] +
                                          base2 + w2) * in4.d[3] + base3;
                    for (int64_t w3 = 0; w3 < win4.d[3]; ++w3) acc += row[w3];
                  }
              dst[oidx] = acc * inv;
            } else {
              T g = src[oidx] * inv;
              for (int64_t w0 = 0; w0 < win4.d[0]; ++w0)
                for (int64_t w1 = 0; w1 < win4.d[1]; ++w1)
                  for (int64_t w2 = 0; w2 < win4.d[2]; ++w2) {
                    T* row = dst + (((base0 + w0) * in4.d[1] + base1 + w1) * in4.d[2] +
                                    base2 + w2) * in4.d[3] + base3;
                    for (int64_t w3 = 0; w3 < win4.d[3]; ++w3) row[w3] += g;
                  }
            }
          }
  };

  auto out = detail::make_op_node<T>(
      out_shape, {x},
      [xi = x.impl(), pool_loop, B, C, in_plane, out_plane](TensorImpl<T>& self) {
        if (!xi->requires_grad) return;
        prof::Scope ps(prof::kPool);
        xi->ensure_grad();
        for (int64_t bc = 0; bc < B * C; ++bc)
          pool_loop(self.grad.data() + bc * out_plane, xi->grad.data() + bc * in_plane, true);
      });
  prof::Scope ps(prof::kPool);
  const T* in = x.data();
  T* o = out.data();
  parallel_for(B * C, [&](int64_t bc) {
    pool_loop(in + bc * in_plane, o + bc * out_plane, false);
  });
  return out;
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

namespace detail {

// Per-thread scratch for the convolution lowering; buffers are reused
// across calls to avoid repeated large allocations.
template <typename T>
struct ConvScratch {
  std::vector<T> patch;      // [K3 x Npos] column-position patch matrix
  std::vector<T> wpack;      // per-temporal-tap weight slabs [Cout x K3]
  std::vector<T> wpack_t;    // transposed slabs [K3 x Cout]
  std::vector<T> dpatch;     // input-gradient patch
  static ConvScratch& get() {
    static thread_local ConvScratch s;
    return s;
  }
};

struct ConvGeom {
  int64_t B, Cin, Cout;
  int64_t Tin, Tk, Tout, st, pt;          // temporal dim (1/1/1/1/0 for rank 3)
  std::array<int64_t, 3> in, k, out, s, p; // spatial dims
  int64_t spatial_in() const { return in[0] * in[1] * in[2]; }
  int64_t npos() const { return out[0] * out[1] * out[2]; }
  int64_t k3() const { return Cin * k[0] * k[1] * k[2]; }
};

// Spatial im2col for one temporal slice: patch[K3 x Npos], row order
// (cin, kx, ky, kz), column order (ox, oy, oz). Out-of-range taps are zero.
// `slice` points at channel 0 of the slice; channels are `chan_stride`
// apart (the sample layout is [Cin, Tin, X, Y, Z]).
//
// When the output grid coincides with the input grid (stride 1, "same"
// padding) a patch row is the whole channel shifted by one flat offset:
// one long copy plus boundary zeroing, instead of per-(ox,oy) runs.
template <typename T>
void im2col3d(const ConvGeom& g, const T* slice, int64_t chan_stride, T* patch) {
  const int64_t X = g.in[0], Y = g.in[1], Z = g.in[2];
  const int64_t Ox = g.out[0], Oy = g.out[1], Oz = g.out[2];
  const int64_t npos = g.npos();
  const bool same_grid = g.s[0] == 1 && g.s[1] == 1 && g.s[2] == 1 && Ox == X && Oy == Y && Oz == Z;
  int64_t row = 0;
  for (int64_t cin = 0; cin < g.Cin; ++cin) {
    const T* chan = slice + cin * chan_stride;
    for (int64_t kx = 0; kx < g.k[0]; ++kx)
      for (int64_t ky = 0; ky < g.k[1]; ++ky)
        for (int64_t kz = 0; kz < g.k[2]; ++kz, ++row) {
          T* dst = patch + row * npos;
          if (same_grid) {
            const int64_t sx = kx - g.p[0], sy = ky - g.p[1], sz = kz - g.p[2];
            const int64_t delta = (sx * Y + sy) * Z + sz;
            int64_t lo = std::max<int64_t>(0, -delta);
            int64_t hi = std::min<int64_t>(npos, npos - delta);
            if (lo > 0) std::memset(dst, 0, sizeof(T) * lo);
            if (hi > lo) std::memcpy(dst + lo, chan + lo + delta, sizeof(T) * (hi - lo));
            if (hi < npos) std::memset(dst + std::max<int64_t>(hi, lo), 0,
                                       sizeof(T) * (npos - std::max<int64_t>(hi, lo)));
            // cells whose per-axis index overflowed wrapped into a
            // neighboring row of the flat copy; zero them out
            for (int64_t bad = 0; bad < -sx; ++bad)
              std::memset(dst + bad * Y * Z, 0, sizeof(T) * Y * Z);
            for (int64_t bad = X - sx; bad < X; ++bad)
              std::memset(dst + bad * Y * Z, 0, sizeof(T) * Y * Z);
            if (sy != 0)
              for (int64_t ox = 0; ox < X; ++ox) {
                for (int64_t bad = 0; bad < -sy; ++bad)
                  std::memset(dst + (ox * Y + bad) * Z, 0, sizeof(T) * Z);
                for (int64_t bad = Y - sy; bad < Y; ++bad)
                  std::memset(dst + (ox * Y + bad) * Z, 0, sizeof(T) * Z);
              }
            if (sz != 0)
              for (int64_t oxy = 0; oxy < X * Y; ++oxy) {
                for (int64_t bad = 0; bad < -sz; ++bad) dst[oxy * Z + bad] = T(0);
                for (int64_t bad = Z - sz; bad < Z; ++bad) dst[oxy * Z + bad] = T(0);
              }
            continue;
          }
          for (int64_t ox = 0; ox < Ox; ++ox) {
            int64_t ix = ox * g.s[0] - g.p[0] + kx;
            if (ix < 0 || ix >= X) {
              std::memset(dst + ox * Oy * Oz, 0, sizeof(T) * Oy * Oz);
              continue;
            }
            for (int64_t oy = 0; oy < Oy; ++oy) {
              T* run = dst + (ox * Oy + oy) * Oz;
              int64_t iy = oy * g.s[1] - g.p[1] + ky;
              if (iy < 0 || iy >= Y) {
                std::memset(run, 0, sizeof(T) * Oz);
                continue;
              }
              const T* src = chan + (ix * Y + iy) * Z;
              if (g.s[2] == 1) {
                int64_t shift = kz - g.p[2];  // iz = oz + shift
                int64_t lo = std::max<int64_t>(0, -shift);
                int64_t hi = std::min<int64_t>(Oz, Z - shift);
                if (lo > 0) std::memset(run, 0, sizeof(T) * std::min(lo, Oz));
                if (hi > lo) std::memcpy(run + lo, src + lo + shift, sizeof(T) * (hi - lo));
                if (hi < Oz) std::memset(run + std::max<int64_t>(hi, 0), 0,
                                         sizeof(T) * (Oz - std::max<int64_t>(hi, 0)));
              } else {
                for (int64_t oz = 0; oz < Oz; ++oz) {
                  int64_t iz = oz * g.s[2] - g.p[2] + kz;
                  run[oz] = (iz >= 0 && iz < Z) ? src[iz] : T(0);
                }
              }
            }
          }
        }
  }
}

// Scatter-add of an input-gradient patch back onto one temporal slice.
// The patch holds the output-position columns [ox_begin, ox_end) x Oy x Oz
// with row stride `ld` (gradients flow in chunks of ox planes so the chunk
// buffer stays cache resident between the producing GEMM and this scatter).
template <typename T>
void col2im3d_add(const ConvGeom& g, const T* patch, int64_t ld, T* slice,
                  int64_t chan_stride, int64_t ox_begin, int64_t ox_end) {
  const int64_t X = g.in[0], Y = g.in[1], Z = g.in[2];
  const int64_t Oy = g.out[1], Oz = g.out[2];
  int64_t row = 0;
  for (int64_t cin = 0; cin < g.Cin; ++cin) {
    T* chan = slice + cin * chan_stride;
    for (int64_t kx = 0; kx < g.k[0]; ++kx)
      for (int64_t ky = 0; ky < g.k[1]; ++ky)
        for (int64_t kz = 0; kz < g.k[2]; ++kz, ++row) {
          const T* src_row = patch + row * ld;
          for (int64_t ox = ox_begin; ox < ox_end; ++ox) {
            int64_t ix = ox * g.s[0] - g.p[0] + kx;
            if (ix < 0 || ix >= X) continue;
            for (int64_t oy = 0; oy < Oy; ++oy) {
              int64_t iy = oy * g.s[1] - g.p[1] + ky;
              if (iy < 0 || iy >= Y) continue;
              const T* run = src_row + ((ox - ox_begin) * Oy + oy) * Oz;
              T* dst = chan + (ix * Y + iy) * Z;
              if (g.s[2] == 1) {
                int64_t shift = kz - g.p[2];
                int64_t lo = std::max<int64_t>(0, -shift);
                int64_t hi = std::min<int64_t>(Oz, Z - shift);
                for (int64_t oz = lo; oz < hi; ++oz) dst[oz + shift] += run[oz];
              } else {
                for (int64_t oz = 0; oz < Oz; ++oz) {
                  int64_t iz = oz * g.s[2] - g.p[2] + kz;
                  if (iz >= 0 && iz < Z) dst[iz] += run[oz];
                }
              }
            }
          }
        }
  }
}

// Repacks [Cout, Cin, Tk, Kx, Ky, Kz] weights into per-temporal-tap slabs:
// wpack[kt]   = [Cout x K3]   (forward, dW layout)
// wpack_t[kt] = [K3 x Cout]   (input-gradient pass)
template <typename T>
void pack_weights(const ConvGeom& g, const T* w, std::vector<T>& wpack,
                  std::vector<T>& wpack_t, bool want_t) {
  const int64_t k3 = g.k3();
  const int64_t kspat = g.k[0] * g.k[1] * g.k[2];
  wpack.assign(static_cast<size_t>(g.Tk * g.Cout * k3), T(0));
  if (want_t) wpack_t.assign(static_cast<size_t>(g.Tk * k3 * g.Cout), T(0));
  for (int64_t kt = 0; kt < g.Tk; ++kt)
    for (int64_t co = 0; co < g.Cout; ++co)
      for (int64_t ci = 0; ci < g.Cin; ++ci) {
        const T* src = w + (((co * g.Cin + ci) * g.Tk + kt)) * kspat;
        T* dst = wpack.data() + (kt * g.Cout + co) * k3 + ci * kspat;
        std::memcpy(dst, src, sizeof(T) * kspat);
        if (want_t) {
          T* base = wpack_t.data() + kt * k3 * g.Cout;
          for (int64_t j = 0; j < kspat; ++j) base[(ci * kspat + j) * g.Cout + co] = src[j];
        }
      }
}

template <typename T>
ConvGeom make_conv_geom(const Tensor<T>& x, const Tensor<T>& w,
                        const std::vector<int64_t>& stride, const std::vector<int64_t>& padding) {
  int k = static_cast<int>(stride.size());
  if (k != 3 && k != 4)
    fail_contract("conv_nd: unsupported rank ", k, " (supported: 3, 4)");
  if (x.rank() != k + 2)
    fail_contract("conv_nd: input rank ", x.rank(), " does not match conv rank ", k);
  if (w.rank() != k + 2)
    fail_contract("conv_nd: weight rank ", w.rank(), " does not match conv rank ", k);
  if (static_cast<int>(padding.size()) != k)
    fail_contract("conv_nd: padding rank ", padding.size(), " vs conv rank ", k);
  if (w.shape()[1] != x.shape()[1])
    fail_contract("conv_nd: input channels ", x.shape()[1], " vs weight channels ",
                  w.shape()[1]);
  ConvGeom g;
  g.B = x.shape()[0];
  g.Cin = x.shape()[1];
  g.Cout = w.shape()[0];
  std::vector<int64_t> din(x.shape().begin() + 2, x.shape().end());
  std::vector<int64_t> dk(w.shape().begin() + 2, w.shape().end());
  std::vector<int64_t> str = stride, pad = padding;
  if (k == 3) {  // lift to rank 4 with a unit temporal dim
    din.insert(din.begin(), 1);
    dk.insert(dk.begin(), 1);
    str.insert(str.begin(), 1);
    pad.insert(pad.begin(), 0);
  }
  g.Tin = din[0];
  g.Tk = dk[0];
  g.st = str[0];
  g.pt = pad[0];
  for (int d = 0; d < 3; ++d) {
    g.in[d] = din[d + 1];
    g.k[d] = dk[d + 1];
    g.s[d] = str[d + 1];
    g.p[d] = pad[d + 1];
  }
  auto out_extent = [&](int64_t D, int64_t K, int64_t s, int64_t p, int dim) {
    if (s < 1) fail_contract("conv_nd: stride must be >= 1 on dim ", dim);
    if (p < 0) fail_contract("conv_nd: padding must be >= 0 on dim ", dim);
    if (D + 2 * p < K)
      fail_contract("conv_nd: kernel ", K, " does not fit padded input ", D + 2 * p,
                    " on dim ", dim);
    return (D + 2 * p - K) / s + 1;
  };
  g.Tout = out_extent(g.Tin, g.Tk, g.st, g.pt, 0);
  for (int d = 0; d < 3; ++d) g.out[d] = out_extent(g.in[d], g.k[d], g.s[d], g.p[d], k == 3 ? d : d + 1);
  return g;
}

// Forward for one sample: temporal taps decompose into shifted spatial
// GEMMs; each input slice is lowered to a patch matrix exactly once.
template <typename T>
void conv_forward_sample(const ConvGeom& g, const T* x, const T* wpack, const T* bias, T* y) {
  auto& scratch = ConvScratch<T>::get();
  const int64_t npos = g.npos();
  const int64_t k3 = g.k3();
  scratch.patch.resize(static_cast<size_t>(k3 * npos));
  // bias fill
  for (int64_t ot = 0; ot < g.Tout; ++ot)
    for (int64_t co = 0; co < g.Cout; ++co) {
      T* row = y + (co * g.Tout + ot) * npos;
      for (int64_t n = 0; n < npos; ++n) row[n] = bias[co];
    }
  for (int64_t u = 0; u < g.Tin; ++u) {
    bool needed = false;
    for (int64_t kt = 0; kt < g.Tk && !needed; ++kt) {
      int64_t num = u + g.pt - kt;
      if (num >= 0 && num % g.st == 0 && num / g.st < g.Tout) needed = true;
    }
    if (!needed) continue;
    {
      prof::Scope pim(prof::kIm2col);
      im2col3d(g, x + u * g.spatial_in(), g.Tin * g.spatial_in(), scratch.patch.data());
    }
    prof::Scope pg(prof::kGemm);
    for (int64_t kt = 0; kt < g.Tk; ++kt) {
      int64_t num = u + g.pt - kt;
      if (num < 0 || num % g.st != 0) continue;
      int64_t ot = num / g.st;
      if (ot >= g.Tout) continue;
      // output slice viewed as [Cout x npos] with row stride Tout*npos
      gemm_nn_acc<T>(g.Cout, npos, k3, wpack + kt * g.Cout * k3, k3, scratch.patch.data(),
                     npos, y + ot * npos, g.Tout * npos);
    }
  }
}

}  // namespace detail

// N-d cross-correlation with bias. input [B,Cin,D1..Dk], weight
// [Cout,Cin,K1..Kk], bias [Cout]; rank k in {3,4}; for k=4 the first
// spatial dim is temporal. Differentiable in input, weight and bias.
template <typename T>
Tensor<T> conv_nd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                  const std::vector<int64_t>& stride, const std::vector<int64_t>& padding) {
  detail::ConvGeom g = detail::make_conv_geom(x, w, stride, padding);
  if (b.numel() != g.Cout)
    fail_contract("conv_nd: bias size ", b.numel(), " vs output channels ", g.Cout);
  std::vector<int64_t> out_shape = {g.B, g.Cout};
  if (x.rank() == 6) out_shape.push_back(g.Tout);
  for (int d = 0; d < 3; ++d) out_shape.push_back(g.out[d]);

  const int64_t in_sample = g.Cin * g.Tin * g.spatial_in();
  const int64_t out_sample = g.Cout * g.Tout * g.npos();

  auto backward = [xi = x.impl(), wi = w.impl(), bi = b.impl(), g, in_sample,
                   out_sample](TensorImpl<T>& self) {
    const int64_t npos = g.npos();
    const int64_t k3 = g.k3();
    const bool need_dx = xi->requires_grad;
    const bool need_dw = wi->requires_grad;
    const bool need_db = bi->requires_grad;
    if (!need_dx && !need_dw && !need_db) return;

    std::vector<T> wpack, wpack_t;
    detail::pack_weights(g, wi->data.data(), wpack, wpack_t, need_dx);
    if (need_dx) xi->ensure_grad();

    // Per-sample weight/bias gradient partials, reduced in sample order so
    // results are independent of the parallel schedule.
    std::vector<T> dw_parts, db_parts;
    if (need_dw) dw_parts.assign(static_cast<size_t>(g.B * g.Tk * g.Cout * k3), T(0));
    if (need_db) db_parts.assign(static_cast<size_t>(g.B * g.Cout), T(0));

    parallel_for(g.B, [&](int64_t s) {
      auto& scratch = detail::ConvScratch<T>::get();
      const T* gy = self.grad.data() + s * out_sample;
      if (need_dx) {
        prof::Scope pdx(prof::kConvBwdDx);
        const int64_t plane = g.out[1] * g.out[2];
        // chunk the gradient patch by ox planes so it stays cache resident
        // between the producing GEMM and the scatter
        int64_t chunk = std::clamp<int64_t>((1 << 19) / (k3 * plane * (int64_t)sizeof(T) + 1),
                                            1, g.out[0]);
        scratch.dpatch.resize(static_cast<size_t>(k3 * chunk * plane));
        T* dx = xi->grad.data() + s * in_sample;
        std::vector<std::pair<int64_t, int64_t>> taps;  // (kt, ot) hitting this input slice
        taps.reserve(g.Tk);
        for (int64_t u = 0; u < g.Tin; ++u) {
          taps.clear();
          for (int64_t kt = 0; kt < g.Tk; ++kt) {
            int64_t num = u + g.pt - kt;
            if (num < 0 || num % g.st != 0) continue;
            int64_t ot = num / g.st;
            if (ot >= g.Tout) continue;
            taps.emplace_back(kt, ot);
          }
          if (taps.empty()) continue;
          for (int64_t ox0 = 0; ox0 < g.out[0]; ox0 += chunk) {
            int64_t oxn = std::min(g.out[0], ox0 + chunk);
            int64_t cols = (oxn - ox0) * plane;
            for (size_t i = 0; i < taps.size(); ++i) {
              auto [kt, ot] = taps[i];
              const T* gsrc = gy + ot * npos + ox0 * plane;
              if (i == 0)
                detail::gemm_nn_ovr<T>(k3, cols, g.Cout, wpack_t.data() + kt * k3 * g.Cout,
                                       g.Cout, gsrc, g.Tout * npos, scratch.dpatch.data(), cols);
              else
                detail::gemm_nn_acc<T>(k3, cols, g.Cout, wpack_t.data() + kt * k3 * g.Cout,
                                       g.Cout, gsrc, g.Tout * npos, scratch.dpatch.data(), cols);
            }
            detail::col2im3d_add(g, scratch.dpatch.data(), cols, dx + u * g.spatial_in(),
                                 g.Tin * g.spatial_in(), ox0, oxn);
          }
        }
      }
      if (need_dw || need_db) {
        prof::Scope pdw(prof::kConvBwdDw);
        scratch.patch.resize(static_cast<size_t>(k3 * npos));
        const T* xs = xi->data.data() + s * in_sample;
        T* dwp = need_dw ? dw_parts.data() + s * g.Tk * g.Cout * k3 : nullptr;
        for (int64_t u = 0; u < g.Tin && need_dw; ++u) {
          bool needed = false;
          for (int64_t kt = 0; kt < g.Tk && !needed; ++kt) {
            int64_t num = u + g.pt - kt;
            if (num >= 0 && num % g.st == 0 && num / g.st < g.Tout) needed = true;
          }
          if (!needed) continue;
          detail::im2col3d(g, xs + u * g.spatial_in(), g.Tin * g.spatial_in(),
                           scratch.patch.data());
          for (int64_t kt = 0; kt < g.Tk; ++kt) {
            int64_t num = u + g.pt - kt;
            if (num < 0 || num % g.st != 0) continue;
            int64_t ot = num / g.st;
            if (ot >= g.Tout) continue;
            detail::gemm_nt_acc<T>(g.Cout, k3, npos, gy + ot * npos, g.Tout * npos,
                                   scratch.patch.data(), npos, dwp + kt * g.Cout * k3, k3);
          }
        }
        if (need_db) {
          T* dbp = db_parts.data() + s * g.Cout;
          for (int64_t co = 0; co < g.Cout; ++co) {
            T acc = 0;
            for (int64_t ot = 0; ot < g.Tout; ++ot) {
              const T* row = gy + (co * g.Tout + ot) * npos;
              for (int64_t n = 0; n < npos; ++n) acc += row[n];
            }
            dbp[co] += acc;
          }
        }
      }
    });

    if (need_dw) {
      wi->ensure_grad();
      const int64_t kspat = g.k[0] * g.k[1] * g.k[2];
      for (int64_t s = 0; s < g.B; ++s) {
        const T* dwp = dw_parts.data() + s * g.Tk * g.Cout * k3;
        // unpack slab layout back to [Cout, Cin, Tk, Kspat]
        for (int64_t kt = 0; kt < g.Tk; ++kt)
          for (int64_t co = 0; co < g.Cout; ++co)
            for (int64_t ci = 0; ci < g.Cin; ++ci) {
              const T* src = dwp + (kt * g.Cout + co) * k3 + ci * kspat;
              T* dst = wi->grad.data() + ((co * g.Cin + ci) * g.Tk + kt) * kspat;
              for (int64_t j = 0; j < kspat; ++j) dst[j] += src[j];
            }
      }
    }
    if (need_db) {
      bi->ensure_grad();
      for (int64_t s = 0; s < g.B; ++s)
        for (int64_t co = 0; co < g.Cout; ++co) bi->grad[co] += db_parts[s * g.Cout + co];
    }
  };

  auto out = detail::make_op_node<T>(out_shape, {x, w, b}, backward);
  prof::Scope ps(prof::kConvFwd);
  std::vector<T> wpack, wpack_t;
  detail::pack_weights(g, w.data(), wpack, wpack_t, false);
  const T* in = x.data();
  const T* bias = b.data();
  T* o = out.data();
  parallel_for(g.B, [&](int64_t s) {
    detail::conv_forward_sample(g, in + s * in_sample, wpack.data(), bias, o + s * out_sample);
  });
  return out;
}

}  // namespace oct4d

#endif
