#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "tabs/kernels.hpp"
#include "tabs/tensor.hpp"

// Differentiable ops. Value passes parallelize only across independent output
// elements (or rows/lanes/groups that one thread owns end to end); reductions
// that cross the whole tensor run serially. That keeps results identical no
// matter the thread count or execution mode.

namespace tabs::ops {

using kernels::parallel_for;

namespace detail_ops {

template <typename T>
void check_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw UsageError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

template <typename T>
void check_rank(const TensorT<T>& t, std::size_t rank, const char* op) {
  if (t.rank() != rank)
    throw UsageError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
}

}  // namespace detail_ops

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  detail_ops::check_same_shape(a, b, "add");
  TensorT<T> out(a.shape());
  const T* av = a.data().data();
  const T* bv = b.data().data();
  T* ov = out.raw_data().data();
  parallel_for(out.numel(), [=](std::size_t i) { ov[i] = av[i] + bv[i]; });
  auto pa = a.payload(), pb = b.payload();
  detail::attach_node<T>(out, "add", {pa, pb}, [pa, pb](const detail::Payload<T>& o) {
    if (pa->needs_grad()) {
      pa->ensure_grad();
      T* g = pa->grad.data();
      const T* og = o.grad.data();
      parallel_for(o.grad.size(), [=](std::size_t i) { g[i] += og[i]; });
    }
    if (pb->needs_grad()) {
      pb->ensure_grad();
      T* g = pb->grad.data();
      const T* og = o.grad.data();
      parallel_for(o.grad.size(), [=](std::size_t i) { g[i] += og[i]; });
    }
  });
  return out;
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  detail_ops::check_same_shape(a, b, "mul");
  TensorT<T> out(a.shape());
  const T* av = a.data().data();
  const T* bv = b.data().data();
  T* ov = out.raw_data().data();
  parallel_for(out.numel(), [=](std::size_t i) { ov[i] = av[i] * bv[i]; });
  auto pa = a.payload(), pb = b.payload();
  detail::attach_node<T>(out, "mul", {pa, pb}, [pa, pb](const detail::Payload<T>& o) {
    const T* og = o.grad.data();
    if (pa->needs_grad()) {
      pa->ensure_grad();
      T* g = pa->grad.data();
      const T* other = pb->value.data();
      parallel_for(o.grad.size(), [=](std::size_t i) { g[i] += og[i] * other[i]; });
    }
    if (pb->needs_grad()) {
      pb->ensure_grad();
      T* g = pb->grad.data();
      const T* other = pa->value.data();
      parallel_for(o.grad.size(), [=](std::size_t i) { g[i] += og[i] * other[i]; });
    }
  });
  return out;
}

template <typename T>
TensorT<T> scalar_mul(const TensorT<T>& a, T s) {
  TensorT<T> out(a.shape());
  const T* av = a.data().data();
  T* ov = out.raw_data().data();
  parallel_for(out.numel(), [=](std::size_t i) { ov[i] = av[i] * s; });
  auto pa = a.payload();
  detail::attach_node<T>(out, "scalar_mul", {pa}, [pa, s](const detail::Payload<T>& o) {
    pa->ensure_grad();
    T* g = pa->grad.data();
    const T* og = o.grad.data();
    parallel_for(o.grad.size(), [=](std::size_t i) { g[i] += og[i] * s; });
  });
  return out;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& a) {
  TensorT<T> out(a.shape());
  const T* av = a.data().data();
  T* ov = out.raw_data().data();
  parallel_for(out.numel(), [=](std::size_t i) { ov[i] = av[i] > T(0) ? av[i] : T(0); });
  auto pa = a.payload();
  detail::attach_node<T>(out, "relu", {pa}, [pa](const detail::Payload<T>& o) {
    pa->ensure_grad();
    T* g = pa->grad.data();
    const T* og = o.grad.data();
    const T* x = pa->value.data();
    parallel_for(o.grad.size(), [=](std::size_t i) {
      if (x[i] > T(0)) g[i] += og[i];
    });
  });
  return out;
}

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& a) {
  TensorT<T> out(a.shape());
  const T* av = a.data().data();
  T* ov = out.raw_data().data();
  parallel_for(out.numel(),
               [=](std::size_t i) { ov[i] = T(1) / (T(1) + std::exp(-av[i])); });
  auto pa = a.payload();
  auto po = out.payload();
  detail::attach_node<T>(out, "sigmoid", {pa}, [pa, po](const detail::Payload<T>& o) {
    pa->ensure_grad();
    T* g = pa->grad.data();
    const T* og = o.grad.data();
    const T* s = po->value.data();
    parallel_for(o.grad.size(), [=](std::size_t i) { g[i] += og[i] * s[i] * (T(1) - s[i]); });
  });
  return out;
}

// a[m,k] * b[k,n] -> [m,n]
template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  detail_ops::check_rank(a, 2, "matmul");
  detail_ops::check_rank(b, 2, "matmul");
  if (a.extent(1) != b.extent(0))
    throw UsageError("matmul: inner extents differ, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const int m = static_cast<int>(a.extent(0));
  const int k = static_cast<int>(a.extent(1));
  const int n = static_cast<int>(b.extent(1));
  TensorT<T> out(Shape{a.extent(0), b.extent(1)});
  kernels::matmul_nn(a.data().data(), b.data().data(), out.raw_data().data(), m, k, n);
  auto pa = a.payload(), pb = b.payload();
  detail::attach_node<T>(out, "matmul", {pa, pb}, [pa, pb, m, k, n](const detail::Payload<T>& o) {
    if (pa->needs_grad()) {
      pa->ensure_grad();
      kernels::matmul_nt_acc(o.grad.data(), pb->value.data(), pa->grad.data(), m, n, k);
    }
    if (pb->needs_grad()) {
      pb->ensure_grad();
      kernels::matmul_tn_acc(pa->value.data(), o.grad.data(), pb->grad.data(), m, k, n);
    }
  });
  return out;
}

template <typename T>
TensorT<T> transpose2d(const TensorT<T>& a) {
  detail_ops::check_rank(a, 2, "transpose2d");
  const std::size_t m = a.extent(0), n = a.extent(1);
  TensorT<T> out(Shape{n, m});
  const T* av = a.data().data();
  T* ov = out.raw_data().data();
  parallel_for(n, [=](std::size_t j) {
    for (std::size_t i = 0; i < m; ++i) ov[j * m + i] = av[i * n + j];
  });
  auto pa = a.payload();
  detail::attach_node<T>(out, "transpose2d", {pa}, [pa, m, n](const detail::Payload<T>& o) {
    pa->ensure_grad();
    T* g = pa->grad.data();
    const T* og = o.grad.data();
    parallel_for(m, [=](std::size_t i) {
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += og[j * m + i];
    });
  });
  return out;
}

// a[m,n] + bias[n], broadcast over rows.
template <typename T>
TensorT<T> add_row_bias(const TensorT<T>& a, const TensorT<T>& bias) {
  detail_ops::check_rank(a, 2, "add_row_bias");
  detail_ops::check_rank(bias, 1, "add_row_bias");
  const std::size_t m = a.extent(0), n = a.extent(1);
  if (bias.extent(0) != n)
    throw UsageError("add_row_bias: bias " + shape_str(bias.shape()) + " vs matrix " +
                     shape_str(a.shape()));
  TensorT<T> out(a.shape());
  const T* av = a.data().data();
  const T* bv = bias.data().data();
  T* ov = out.raw_data().data();
  parallel_for(m, [=](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j) ov[i * n + j] = av[i * n + j] + bv[j];
  });
  auto pa = a.payload(), pb = bias.payload();
  detail::attach_node<T>(out, "add_row_bias", {pa, pb}, [pa, pb, m, n](const detail::Payload<T>& o) {
    const T* og = o.grad.data();
    if (pa->needs_grad()) {
      pa->ensure_grad();
      T* g = pa->grad.data();
      parallel_for(m * n, [=](std::size_t i) { g[i] += og[i]; });
    }
    if (pb->needs_grad()) {
      pb->ensure_grad();
      T* g = pb->grad.data();
      parallel_for(n, [=](std::size_t j) {
        T acc = T(0);
        for (std::size_t i = 0; i < m; ++i) acc += og[i * n + j];
        g[j] += acc;
      });
    }
  });
  return out;
}

template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
  return add_row_bias(matmul(x, w), b);
}

// Columns [c0, c1) of a [m,n] matrix.
template <typename T>
TensorT<T> slice_cols(const TensorT<T>& a, std::size_t c0, std::size_t c1) {
  detail_ops::check_rank(a, 2, "slice_cols");
  const std::size_t m = a.extent(0), n = a.extent(1);
  if (c0 >= c1 || c1 > n)
    throw UsageError("slice_cols: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                     ") out of " + std::to_string(n) + " columns");
  const std::size_t w = c1 - c0;
  TensorT<T> out(Shape{m, w});
  const T* av = a.data().data();
  T* ov = out.raw_data().data();
  parallel_for(m, [=](std::size_t i) {
    for (std::size_t j = 0; j < w; ++j) ov[i * w + j] = av[i * n + c0 + j];
  });
  auto pa = a.payload();
  detail::attach_node<T>(out, "slice_cols", {pa}, [pa, m, n, c0, w](const detail::Payload<T>& o) {
    pa->ensure_grad();
    T* g = pa->grad.data();
    const T* og = o.grad.data();
    parallel_for(m, [=](std::size_t i) {
      for (std::size_t j = 0; j < w; ++j) g[i * n + c0 + j] += og[i * w + j];
    });
  });
  return out;
}

template <typename T>
TensorT<T> concat_cols(const std::vector<TensorT<T>>& parts) {
  if (parts.empty()) throw UsageError("concat_cols: no inputs");
  const std::size_t m = parts[0].extent(0);
  std::size_t n = 0;
  for (const auto& p : parts) {
    detail_ops::check_rank(p, 2, "concat_cols");
    if (p.extent(0) != m) throw UsageError("concat_cols: row counts differ");
    n += p.extent(1);
  }
  TensorT<T> out(Shape{m, n});
  T* ov = out.raw_data().data();
  std::vector<std::shared_ptr<detail::Payload<T>>> payloads;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    payloads.push_back(p.payload());
    offsets.push_back(off);
    const std::size_t w = p.extent(1);
    const T* pv = p.data().data();
    const std::size_t o0 = off;
    parallel_for(m, [=](std::size_t i) {
      for (std::size_t j = 0; j < w; ++j) ov[i * n + o0 + j] = pv[i * w + j];
    });
    off += w;
  }
  detail::attach_node<T>(out, "concat_cols", payloads,
                         [payloads, offsets, m, n](const detail::Payload<T>& o) {
                           const T* og = o.grad.data();
                           for (std::size_t pi = 0; pi < payloads.size(); ++pi) {
                             auto& p = payloads[pi];
                             if (!p->needs_grad()) continue;
                             p->ensure_grad();
                             T* g = p->grad.data();
                             const std::size_t w = p->shape[1];
                             const std::size_t o0 = offsets[pi];
                             parallel_for(m, [=](std::size_t i) {
                               for (std::size_t j = 0; j < w; ++j) g[i * w + j] += og[i * n + o0 + j];
                             });
                           }
                         });
  return out;
}

// Softmax along `axis`; other axes index independent lanes.
template <typename T>
TensorT<T> softmax(const TensorT<T>& a, std::size_t axis) {
  if (axis >= a.rank()) throw UsageError("softmax: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.extent(i);
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.extent(i);
  const std::size_t len = a.extent(axis);
  TensorT<T> out(a.shape());
  const T* av = a.data().data();
  T* ov = out.raw_data().data();
  parallel_for(outer * inner, [=](std::size_t lane) {
    const std::size_t o = lane / inner, in = lane % inner;
    const std::size_t base = o * len * inner + in;
    T mx = av[base];
    for (std::size_t t = 1; t < len; ++t) mx = std::max(mx, av[base + t * inner]);
    T sum = T(0);
    for (std::size_t t = 0; t < len; ++t) {
      const T e = std::exp(av[base + t * inner] - mx);
      ov[base + t * inner] = e;
      sum += e;
    }
    const T inv = T(1) / sum;
    for (std::size_t t = 0; t < len; ++t) ov[base + t * inner] *= inv;
  });
  auto pa = a.payload();
  auto po = out.payload();
  detail::attach_node<T>(out, "softmax", {pa},
                         [pa, po, outer, inner, len](const detail::Payload<T>& o) {
                           pa->ensure_grad();
                           T* g = pa->grad.data();
                           const T* og = o.grad.data();
                           const T* s = po->value.data();
                           parallel_for(outer * inner, [=](std::size_t lane) {
                             const std::size_t ot = lane / inner, in = lane % inner;
                             const std::size_t base = ot * len * inner + in;
                             T dot = T(0);
                             for (std::size_t t = 0; t < len; ++t)
                               dot += og[base + t * inner] * s[base + t * inner];
                             for (std::size_t t = 0; t < len; ++t) {
                               const std::size_t i = base + t * inner;
                               g[i] += s[i] * (og[i] - dot);
                             }
                           });
                         });
  return out;
}

// Row-wise layer norm on [m,n] with affine gamma/beta of shape [n].
template <typename T>
TensorT<T> layer_norm(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                      T eps = T(1e-5)) {
  detail_ops::check_rank(x, 2, "layer_norm");
  const std::size_t m = x.extent(0), n = x.extent(1);
  if (gamma.shape() != Shape{n} || beta.shape() != Shape{n})
    throw UsageError("layer_norm: affine params must have shape [" + std::to_string(n) + "]");
  TensorT<T> out(x.shape());
  const T* xv = x.data().data();
  const T* gv = gamma.data().data();
  const T* bv = beta.data().data();
  T* ov = out.raw_data().data();
  parallel_for(m, [=](std::size_t i) {
    const T* row = xv + i * n;
    T mu = T(0);
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= T(n);
    T var = T(0);
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= T(n);
    const T inv = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) ov[i * n + j] = gv[j] * ((row[j] - mu) * inv) + bv[j];
  });
  auto px = x.payload(), pg = gamma.payload(), pb = beta.payload();
  detail::attach_node<T>(
      out, "layer_norm", {px, pg, pb}, [px, pg, pb, m, n, eps](const detail::Payload<T>& o) {
        const T* og = o.grad.data();
        const T* xv = px->value.data();
        const T* gv = pg->value.data();
        std::vector<T> mu(m), inv(m);
        T* mup = mu.data();
        T* invp = inv.data();
        parallel_for(m, [=](std::size_t i) {
          const T* row = xv + i * n;
          T m0 = T(0);
          for (std::size_t j = 0; j < n; ++j) m0 += row[j];
          m0 /= T(n);
          T var = T(0);
          for (std::size_t j = 0; j < n; ++j) var += (row[j] - m0) * (row[j] - m0);
          var /= T(n);
          mup[i] = m0;
          invp[i] = T(1) / std::sqrt(var + eps);
        });
        if (px->needs_grad()) {
          px->ensure_grad();
          T* g = px->grad.data();
          parallel_for(m, [=](std::size_t i) {
            const T* row = xv + i * n;
            T m1 = T(0), m2 = T(0);
            for (std::size_t j = 0; j < n; ++j) {
              const T gp = og[i * n + j] * gv[j];
              m1 += gp;
              m2 += gp * ((row[j] - mup[i]) * invp[i]);
            }
            m1 /= T(n);
            m2 /= T(n);
            for (std::size_t j = 0; j < n; ++j) {
              const T gp = og[i * n + j] * gv[j];
              const T xh = (row[j] - mup[i]) * invp[i];
              g[i * n + j] += (gp - m1 - xh * m2) * invp[i];
            }
          });
        }
        if (pg->needs_grad() || pb->needs_grad()) {
          if (pg->needs_grad()) pg->ensure_grad();
          if (pb->needs_grad()) pb->ensure_grad();
          T* gg = pg->needs_grad() ? pg->grad.data() : nullptr;
          T* gb = pb->needs_grad() ? pb->grad.data() : nullptr;
          parallel_for(n, [=](std::size_t j) {
            T sg = T(0), sb = T(0);
            for (std::size_t i = 0; i < m; ++i) {
              sg += og[i * n + j] * ((xv[i * n + j] - mup[i]) * invp[i]);
              sb += og[i * n + j];
            }
            if (gg) gg[j] += sg;
            if (gb) gb[j] += sb;
          });
        }
      });
  return out;
}

// Group norm on [C,D,H,W]; groups must divide C; affine per channel.
template <typename T>
TensorT<T> group_norm(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                      std::size_t groups, T eps = T(1e-5)) {
  detail_ops::check_rank(x, 4, "group_norm");
  const std::size_t C = x.extent(0);
  const std::size_t V = x.extent(1) * x.extent(2) * x.extent(3);
  if (groups == 0 || C % groups)
    throw UsageError("group_norm: " + std::to_string(groups) + " groups do not divide " +
                     std::to_string(C) + " channels");
  if (gamma.shape() != Shape{C} || beta.shape() != Shape{C})
    throw UsageError("group_norm: affine params must have shape [" + std::to_string(C) + "]");
  const std::size_t cpg = C / groups;
  const std::size_t gsz = cpg * V;
  TensorT<T> out(x.shape());
  const T* xv = x.data().data();
  const T* gv = gamma.data().data();
  const T* bv = beta.data().data();
  T* ov = out.raw_data().data();
  parallel_for(groups, [=](std::size_t g) {
    const T* base = xv + g * gsz;
    T mu = T(0);
    for (std::size_t i = 0; i < gsz; ++i) mu += base[i];
    mu /= T(gsz);
    T var = T(0);
    for (std::size_t i = 0; i < gsz; ++i) var += (base[i] - mu) * (base[i] - mu);
    var /= T(gsz);
    const T inv = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cpg; ++c) {
      const std::size_t ch = g * cpg + c;
      const T ga = gv[ch], be = bv[ch];
      const T* xr = base + c * V;
      T* orow = ov + ch * V;
      for (std::size_t i = 0; i < V; ++i) orow[i] = ga * ((xr[i] - mu) * inv) + be;
    }
  });
  auto px = x.payload(), pg = gamma.payload(), pb = beta.payload();
  detail::attach_node<T>(
      out, "group_norm", {px, pg, pb},
      [px, pg, pb, groups, cpg, V, gsz, eps](const detail::Payload<T>& o) {
        const T* og = o.grad.data();
        const T* xv = px->value.data();
        const T* gv = pg->value.data();
        std::vector<T> mu(groups), inv(groups);
        T* mup = mu.data();
        T* invp = inv.data();
        parallel_for(groups, [=](std::size_t grp) {
          const T* base = xv + grp * gsz;
          T m0 = T(0);
          for (std::size_t i = 0; i < gsz; ++i) m0 += base[i];
          m0 /= T(gsz);
          T var = T(0);
          for (std::size_t i = 0; i < gsz; ++i) var += (base[i] - m0) * (base[i] - m0);
          var /= T(gsz);
          mup[grp] = m0;
          invp[grp] = T(1) / std::sqrt(var + eps);
        });
        if (px->needs_grad()) {
          px->ensure_grad();
          T* g = px->grad.data();
          parallel_for(groups, [=](std::size_t grp) {
            const T* base = xv + grp * gsz;
            const T m0 = mup[grp], iv = invp[grp];
            T m1 = T(0), m2 = T(0);
            for (std::size_t c = 0; c < cpg; ++c) {
              const std::size_t ch = grp * cpg + c;
              const T ga = gv[ch];
              const T* xr = base + c * V;
              const T* gr = og + ch * V;
              for (std::size_t i = 0; i < V; ++i) {
                const T gp = gr[i] * ga;
                m1 += gp;
                m2 += gp * ((xr[i] - m0) * iv);
              }
            }
            m1 /= T(gsz);
            m2 /= T(gsz);
            for (std::size_t c = 0; c < cpg; ++c) {
              const std::size_t ch = grp * cpg + c;
              const T ga = gv[ch];
              const T* xr = base + c * V;
              const T* gr = og + ch * V;
              T* gx = g + ch * V;
              for (std::size_t i = 0; i < V; ++i) {
                const T gp = gr[i] * ga;
                const T xh = (xr[i] - m0) * iv;
                gx[i] += (gp - m1 - xh * m2) * iv;
              }
            }
          });
        }
        if (pg->needs_grad() || pb->needs_grad()) {
          if (pg->needs_grad()) pg->ensure_grad();
          if (pb->needs_grad()) pb->ensure_grad();
          T* gg = pg->needs_grad() ? pg->grad.data() : nullptr;
          T* gb = pb->needs_grad() ? pb->grad.data() : nullptr;
          parallel_for(groups * cpg, [=](std::size_t ch) {
            const T m0 = mup[ch / cpg], iv = invp[ch / cpg];
            const T* xr = xv + ch * V;
            const T* gr = og + ch * V;
            T sg = T(0), sb = T(0);
            for (std::size_t i = 0; i < V; ++i) {
              sg += gr[i] * ((xr[i] - m0) * iv);
              sb += gr[i];
            }
            if (gg) gg[ch] += sg;
            if (gb) gb[ch] += sb;
          });
        }
      });
  return out;
}

// x[Cin,D,H,W] * w[Cout,Cin,k,k,k] + b[Cout] -> [Cout,D',H',W']
template <typename T>
TensorT<T> conv3d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b, int stride,
                  int pad) {
  detail_ops::check_rank(x, 4, "conv3d");
  detail_ops::check_rank(w, 5, "conv3d");
  if (w.extent(1) != x.extent(0))
    throw UsageError("conv3d: weight expects " + std::to_string(w.extent(1)) +
                     " input channels, got " + std::to_string(x.extent(0)));
  if (w.extent(2) != w.extent(3) || w.extent(3) != w.extent(4))
    throw UsageError("conv3d: kernel must be cubic, got " + shape_str(w.shape()));
  if (b.shape() != Shape{w.extent(0)})
    throw UsageError("conv3d: bias must have shape [" + std::to_string(w.extent(0)) + "]");
  kernels::Conv3dDims d;
  d.cin = static_cast<int>(x.extent(0));
  d.cout = static_cast<int>(w.extent(0));
  d.in_d = static_cast<int>(x.extent(1));
  d.in_h = static_cast<int>(x.extent(2));
  d.in_w = static_cast<int>(x.extent(3));
  d.k = static_cast<int>(w.extent(2));
  d.stride = stride;
  d.pad = pad;
  d.out_d = (d.in_d + 2 * pad - d.k) / stride + 1;
  d.out_h = (d.in_h + 2 * pad - d.k) / stride + 1;
  d.out_w = (d.in_w + 2 * pad - d.k) / stride + 1;
  if (d.out_d < 1 || d.out_h < 1 || d.out_w < 1)
    throw UsageError("conv3d: kernel larger than padded input " + shape_str(x.shape()));
  TensorT<T> out(Shape{static_cast<std::size_t>(d.cout), static_cast<std::size_t>(d.out_d),
                       static_cast<std::size_t>(d.out_h), static_cast<std::size_t>(d.out_w)});
  kernels::conv3d_forward(x.data().data(), w.data().data(), b.data().data(),
                          out.raw_data().data(), d);
  auto px = x.payload(), pw = w.payload(), pb = b.payload();
  detail::attach_node<T>(out, "conv3d", {px, pw, pb}, [px, pw, pb, d](const detail::Payload<T>& o) {
    if (px->needs_grad()) {
      px->ensure_grad();
      kernels::conv3d_backward_input(o.grad.data(), pw->value.data(), px->grad.data(), d);
    }
    if (pw->needs_grad()) {
      pw->ensure_grad();
      kernels::conv3d_backward_weight(o.grad.data(), px->value.data(), pw->grad.data(), d);
    }
    if (pb->needs_grad()) {
      pb->ensure_grad();
      kernels::conv3d_backward_bias(o.grad.data(), pb->grad.data(), d);
    }
  });
  return out;
}

// x[Cin,D,H,W] * w[Cin,Cout,k,k,k] + b[Cout] -> [Cout,(D-1)s+k,...]
template <typename T>
TensorT<T> conv_transpose3d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                            int stride) {
  detail_ops::check_rank(x, 4, "conv_transpose3d");
  detail_ops::check_rank(w, 5, "conv_transpose3d");
  if (w.extent(0) != x.extent(0))
    throw UsageError("conv_transpose3d: weight expects " + std::to_string(w.extent(0)) +
                     " input channels, got " + std::to_string(x.extent(0)));
  if (w.extent(2) != w.extent(3) || w.extent(3) != w.extent(4))
    throw UsageError("conv_transpose3d: kernel must be cubic, got " + shape_str(w.shape()));
  if (b.shape() != Shape{w.extent(1)})
    throw UsageError("conv_transpose3d: bias must have shape [" + std::to_string(w.extent(1)) + "]");
  kernels::ConvT3dDims d;
  d.cin = static_cast<int>(x.extent(0));
  d.cout = static_cast<int>(w.extent(1));
  d.in_d = static_cast<int>(x.extent(1));
  d.in_h = static_cast<int>(x.extent(2));
  d.in_w = static_cast<int>(x.extent(3));
  d.k = static_cast<int>(w.extent(2));
  d.stride = stride;
  d.out_d = (d.in_d - 1) * stride + d.k;
  d.out_h = (d.in_h - 1) * stride + d.k;
  d.out_w = (d.in_w - 1) * stride + d.k;
  TensorT<T> out(Shape{static_cast<std::size_t>(d.cout), static_cast<std::size_t>(d.out_d),
                       static_cast<std::size_t>(d.out_h), static_cast<std::size_t>(d.out_w)});
  kernels::convt3d_forward(x.data().data(), w.data().data(), b.data().data(),
                           out.raw_data().data(), d);
  auto px = x.payload(), pw = w.payload(), pb = b.payload();
  detail::attach_node<T>(
      out, "conv_transpose3d", {px, pw, pb}, [px, pw, pb, d](const detail::Payload<T>& o) {
        if (px->needs_grad()) {
          px->ensure_grad();
          kernels::convt3d_backward_input(o.grad.data(), pw->value.data(), px->grad.data(), d);
        }
        if (pw->needs_grad()) {
          pw->ensure_grad();
          kernels::convt3d_backward_weight(o.grad.data(), px->value.data(), pw->grad.data(), d);
        }
        if (pb->needs_grad()) {
          pb->ensure_grad();
          T* gb = pb->grad.data();
          const T* og = o.grad.data();
          const std::size_t chw =
              static_cast<std::size_t>(d.out_d) * d.out_h * d.out_w;
          parallel_for(static_cast<std::size_t>(d.cout), [=](std::size_t co) {
            T acc = T(0);
            const T* row = og + co * chw;
            for (std::size_t i = 0; i < chw; ++i) acc += row[i];
            gb[co] += acc;
          });
        }
      });
  return out;
}

// Concatenate two [C,D,H,W] tensors along the channel axis.
template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
  detail_ops::check_rank(a, 4, "concat_channels");
  detail_ops::check_rank(b, 4, "concat_channels");
  for (std::size_t i = 1; i < 4; ++i)
    if (a.extent(i) != b.extent(i))
      throw UsageError("concat_channels: spatial mismatch " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
  TensorT<T> out(Shape{a.extent(0) + b.extent(0), a.extent(1), a.extent(2), a.extent(3)});
  T* ov = out.raw_data().data();
  const T* av = a.data().data();
  const T* bv = b.data().data();
  const std::size_t na = a.numel(), nb = b.numel();
  parallel_for(na, [=](std::size_t i) { ov[i] = av[i]; });
  parallel_for(nb, [=](std::size_t i) { ov[na + i] = bv[i]; });
  auto pa = a.payload(), pb = b.payload();
  detail::attach_node<T>(out, "concat_channels", {pa, pb},
                         [pa, pb, na, nb](const detail::Payload<T>& o) {
                           const T* og = o.grad.data();
                           if (pa->needs_grad()) {
                             pa->ensure_grad();
                             T* g = pa->grad.data();
                             parallel_for(na, [=](std::size_t i) { g[i] += og[i]; });
                           }
                           if (pb->needs_grad()) {
                             pb->ensure_grad();
                             T* g = pb->grad.data();
                             parallel_for(nb, [=](std::size_t i) { g[i] += og[na + i]; });
                           }
                         });
  return out;
}

// [C,D,H,W] -> [C] channel means.
template <typename T>
TensorT<T> global_avg_pool(const TensorT<T>& x) {
  detail_ops::check_rank(x, 4, "global_avg_pool");
  const std::size_t C = x.extent(0);
  const std::size_t V = x.extent(1) * x.extent(2) * x.extent(3);
  TensorT<T> out(Shape{C});
  const T* xv = x.data().data();
  T* ov = out.raw_data().data();
  parallel_for(C, [=](std::size_t c) {
    T acc = T(0);
    const T* row = xv + c * V;
    for (std::size_t i = 0; i < V; ++i) acc += row[i];
    ov[c] = acc / T(V);
  });
  auto px = x.payload();
  detail::attach_node<T>(out, "global_avg_pool", {px}, [px, C, V](const detail::Payload<T>& o) {
    px->ensure_grad();
    T* g = px->grad.data();
    const T* og = o.grad.data();
    parallel_for(C * V, [=](std::size_t i) { g[i] += og[i / V] / T(V); });
  });
  return out;
}

// x[C,D,H,W] scaled per channel by s[C].
template <typename T>
TensorT<T> channel_scale(const TensorT<T>& x, const TensorT<T>& s) {
  detail_ops::check_rank(x, 4, "channel_scale");
  if (s.shape() != Shape{x.extent(0)})
    throw UsageError("channel_scale: scale must have shape [" + std::to_string(x.extent(0)) + "]");
  const std::size_t C = x.extent(0);
  const std::size_t V = x.extent(1) * x.extent(2) * x.extent(3);
  TensorT<T> out(x.shape());
  const T* xv = x.data().data();
  const T* sv = s.data().data();
  T* ov = out.raw_data().data();
  parallel_for(C * V, [=](std::size_t i) { ov[i] = xv[i] * sv[i / V]; });
  auto px = x.payload(), ps = s.payload();
  detail::attach_node<T>(out, "channel_scale", {px, ps},
                         [px, ps, C, V](const detail::Payload<T>& o) {
                           const T* og = o.grad.data();
                           if (px->needs_grad()) {
                             px->ensure_grad();
                             T* g = px->grad.data();
                             const T* sv = ps->value.data();
                             parallel_for(C * V, [=](std::size_t i) { g[i] += og[i] * sv[i / V]; });
                           }
                           if (ps->needs_grad()) {
                             ps->ensure_grad();
                             T* g = ps->grad.data();
                             const T* xv = px->value.data();
                             parallel_for(C, [=](std::size_t c) {
                               T acc = T(0);
                               for (std::size_t i = 0; i < V; ++i)
                                 acc += og[c * V + i] * xv[c * V + i];
                               g[c] += acc;
                             });
                           }
                         });
  return out;
}

template <typename T>
TensorT<T> reshape(const TensorT<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw UsageError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  TensorT<T> out(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  auto px = x.payload();
  detail::attach_node<T>(out, "reshape", {px}, [px](const detail::Payload<T>& o) {
    px->ensure_grad();
    T* g = px->grad.data();
    const T* og = o.grad.data();
    parallel_for(o.grad.size(), [=](std::size_t i) { g[i] += og[i]; });
  });
  return out;
}

template <typename T>
TensorT<T> sum(const TensorT<T>& x) {
  double acc = 0.0;
  for (T v : x.data()) acc += static_cast<double>(v);
  TensorT<T> out = TensorT<T>::scalar(static_cast<T>(acc));
  auto px = x.payload();
  detail::attach_node<T>(out, "sum", {px}, [px](const detail::Payload<T>& o) {
    px->ensure_grad();
    T* g = px->grad.data();
    const T og = o.grad[0];
    parallel_for(px->value.size(), [=](std::size_t i) { g[i] += og; });
  });
  return out;
}

template <typename T>
TensorT<T> mean(const TensorT<T>& x) {
  const std::size_t n = x.numel();
  double acc = 0.0;
  for (T v : x.data()) acc += static_cast<double>(v);
  TensorT<T> out = TensorT<T>::scalar(static_cast<T>(acc / static_cast<double>(n)));
  auto px = x.payload();
  detail::attach_node<T>(out, "mean", {px}, [px, n](const detail::Payload<T>& o) {
    px->ensure_grad();
    T* g = px->grad.data();
    const T og = o.grad[0] / T(n);
    parallel_for(n, [=](std::size_t i) { g[i] += og; });
  });
  return out;
}

// Mean squared error between [C,spatial...] tensors. With a mask (shape equal
// to the spatial extents, entries 0/1) only masked voxels count, averaged over
// C * sum(mask). The sum runs in double regardless of T.
template <typename T>
TensorT<T> masked_mse(const TensorT<T>& pred, const TensorT<T>& target, const TensorT<T>& mask) {
  detail_ops::check_same_shape(pred, target, "masked_mse");
  if (pred.rank() < 2) throw UsageError("masked_mse: expected [channels, spatial...] input");
  const std::size_t C = pred.extent(0);
  const std::size_t V = pred.numel() / C;
  const bool masked = mask.defined();
  const T* mv = nullptr;
  double denom;
  if (masked) {
    if (mask.numel() != V)
      throw UsageError("masked_mse: mask " + shape_str(mask.shape()) + " does not cover " +
                       std::to_string(V) + " voxels");
    mv = mask.data().data();
    double msum = 0.0;
    for (std::size_t i = 0; i < V; ++i) msum += static_cast<double>(mv[i]);
    if (msum == 0.0) throw DataError("masked_mse: mask selects no voxels");
    denom = static_cast<double>(C) * msum;
  } else {
    denom = static_cast<double>(pred.numel());
  }
  const T* pv = pred.data().data();
  const T* tv = target.data().data();
  double acc = 0.0;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < V; ++i) {
      const double d = static_cast<double>(pv[c * V + i]) - static_cast<double>(tv[c * V + i]);
      acc += (masked ? static_cast<double>(mv[i]) : 1.0) * d * d;
    }
  TensorT<T> out = TensorT<T>::scalar(static_cast<T>(acc / denom));
  auto pp = pred.payload(), pt = target.payload();
  auto pm = masked ? mask.payload() : nullptr;
  const T scale = static_cast<T>(2.0 / denom);
  detail::attach_node<T>(out, "masked_mse", {pp, pt},
                         [pp, pt, pm, scale, C, V](const detail::Payload<T>& o) {
                           const T og = o.grad[0];
                           const T* pv = pp->value.data();
                           const T* tv = pt->value.data();
                           const T* mv = pm ? pm->value.data() : nullptr;
                           if (pp->needs_grad()) {
                             pp->ensure_grad();
                             T* g = pp->grad.data();
                             parallel_for(C * V, [=](std::size_t i) {
                               const T m = mv ? mv[i % V] : T(1);
                               g[i] += og * scale * m * (pv[i] - tv[i]);
                             });
                           }
                           if (pt->needs_grad()) {
                             pt->ensure_grad();
                             T* g = pt->grad.data();
                             parallel_for(C * V, [=](std::size_t i) {
                               const T m = mv ? mv[i % V] : T(1);
                               g[i] -= og * scale * m * (pv[i] - tv[i]);
                             });
                           }
                         });
  return out;
}

template <typename T>
TensorT<T> mse(const TensorT<T>& pred, const TensorT<T>& target) {
  return masked_mse(pred, target, TensorT<T>{});
}

}  // namespace tabs::ops
