#pragma once

#include <algorithm>
#include <cstddef>

#include "tabs/kernels.hpp"

// Row-granular kernel cores shared by the serial and OpenMP translation
// units. A "row" is one contiguous innermost-axis span of the output; the
// loop over rows is the only thing the two variants do differently, so the
// per-element reduction order is identical in both and results match bitwise.
// Compiled with -ffp-contract=off to keep that guarantee.

namespace tabs::kernels::core {

inline int ceil_div(int a, int b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }
inline int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

template <typename T>
inline void conv3d_fwd_row(const T* in, const T* w, const T* b, T* out, const Conv3dDims& d,
                           long long row) {
  const int co = static_cast<int>(row / (d.out_d * d.out_h));
  const int rem = static_cast<int>(row % (d.out_d * d.out_h));
  const int od = rem / d.out_h;
  const int oh = rem % d.out_h;

  const std::ptrdiff_t in_hw = static_cast<std::ptrdiff_t>(d.in_h) * d.in_w;
  const std::ptrdiff_t in_chw = d.in_d * in_hw;
  const int kk = d.k * d.k * d.k;

  T* orow = out + ((static_cast<std::ptrdiff_t>(co) * d.out_d + od) * d.out_h + oh) * d.out_w;
  const T bias = b ? b[co] : T(0);
  for (int ow = 0; ow < d.out_w; ++ow) orow[ow] = bias;

  const int id0 = od * d.stride - d.pad;
  const int ih0 = oh * d.stride - d.pad;
  const int kd_lo = std::max(0, -id0), kd_hi = std::min(d.k, d.in_d - id0);
  const int kh_lo = std::max(0, -ih0), kh_hi = std::min(d.k, d.in_h - ih0);

  for (int ci = 0; ci < d.cin; ++ci) {
    const T* inc = in + ci * in_chw;
    const T* wci = w + (static_cast<std::ptrdiff_t>(co) * d.cin + ci) * kk;
    for (int kd = kd_lo; kd < kd_hi; ++kd) {
      for (int kh = kh_lo; kh < kh_hi; ++kh) {
        const T* irow = inc + (id0 + kd) * in_hw + static_cast<std::ptrdiff_t>(ih0 + kh) * d.in_w;
        const T* wrow = wci + (kd * d.k + kh) * d.k;
        for (int kw = 0; kw < d.k; ++kw) {
          const T wv = wrow[kw];
          const int ow_lo = std::max(0, ceil_div(d.pad - kw, d.stride));
          const int ow_hi = std::min(d.out_w - 1, floor_div(d.in_w - 1 + d.pad - kw, d.stride));
          const int base = kw - d.pad;
          for (int ow = ow_lo; ow <= ow_hi; ++ow) orow[ow] += irow[ow * d.stride + base] * wv;
        }
      }
    }
  }
}

template <typename T>
inline void conv3d_bwd_input_row(const T* gout, const T* w, T* gin, const Conv3dDims& d,
                                 long long row) {
  const int ci = static_cast<int>(row / (d.in_d * d.in_h));
  const int rem = static_cast<int>(row % (d.in_d * d.in_h));
  const int id = rem / d.in_h;
  const int ih = rem % d.in_h;

  const std::ptrdiff_t out_hw = static_cast<std::ptrdiff_t>(d.out_h) * d.out_w;
  const std::ptrdiff_t out_chw = d.out_d * out_hw;
  const int kk = d.k * d.k * d.k;

  T* grow = gin + ((static_cast<std::ptrdiff_t>(ci) * d.in_d + id) * d.in_h + ih) * d.in_w;

  for (int co = 0; co < d.cout; ++co) {
    const T* goc = gout + co * out_chw;
    const T* wci = w + (static_cast<std::ptrdiff_t>(co) * d.cin + ci) * kk;
    for (int kd = 0; kd < d.k; ++kd) {
      const int dnum = id + d.pad - kd;
      if (dnum < 0 || dnum % d.stride) continue;
      const int od = dnum / d.stride;
      if (od >= d.out_d) continue;
      for (int kh = 0; kh < d.k; ++kh) {
        const int hnum = ih + d.pad - kh;
        if (hnum < 0 || hnum % d.stride) continue;
        const int oh = hnum / d.stride;
        if (oh >= d.out_h) continue;
        const T* gorow = goc + od * out_hw + static_cast<std::ptrdiff_t>(oh) * d.out_w;
        const T* wrow = wci + (kd * d.k + kh) * d.k;
        for (int kw = 0; kw < d.k; ++kw) {
          const T wv = wrow[kw];
          const int ow_lo = std::max(0, ceil_div(d.pad - kw, d.stride));
          const int ow_hi = std::min(d.out_w - 1, floor_div(d.in_w - 1 + d.pad - kw, d.stride));
          const int base = kw - d.pad;
          for (int ow = ow_lo; ow <= ow_hi; ++ow) grow[ow * d.stride + base] += gorow[ow] * wv;
        }
      }
    }
  }
}

// One row = the k innermost weight-gradient entries for fixed (co, ci, kd, kh).
template <typename T>
inline void conv3d_bwd_weight_row(const T* gout, const T* in, T* gw, const Conv3dDims& d,
                                  long long row) {
  const int kh = static_cast<int>(row % d.k);
  long long r = row / d.k;
  const int kd = static_cast<int>(r % d.k);
  r /= d.k;
  const int ci = static_cast<int>(r % d.cin);
  const int co = static_cast<int>(r / d.cin);

  const std::ptrdiff_t in_hw = static_cast<std::ptrdiff_t>(d.in_h) * d.in_w;
  const std::ptrdiff_t in_chw = d.in_d * in_hw;
  const std::ptrdiff_t out_hw = static_cast<std::ptrdiff_t>(d.out_h) * d.out_w;
  const std::ptrdiff_t out_chw = d.out_d * out_hw;

  T* gwrow = gw + (((static_cast<std::ptrdiff_t>(co) * d.cin + ci) * d.k + kd) * d.k + kh) * d.k;
  const T* inc = in + ci * in_chw;
  const T* goc = gout + co * out_chw;

  const int od_lo = std::max(0, ceil_div(d.pad - kd, d.stride));
  const int od_hi = std::min(d.out_d - 1, floor_div(d.in_d - 1 + d.pad - kd, d.stride));
  const int oh_lo = std::max(0, ceil_div(d.pad - kh, d.stride));
  const int oh_hi = std::min(d.out_h - 1, floor_div(d.in_h - 1 + d.pad - kh, d.stride));

  for (int kw = 0; kw < d.k; ++kw) {
    const int ow_lo = std::max(0, ceil_div(d.pad - kw, d.stride));
    const int ow_hi = std::min(d.out_w - 1, floor_div(d.in_w - 1 + d.pad - kw, d.stride));
    const int base = kw - d.pad;
    T acc = T(0);
    for (int od = od_lo; od <= od_hi; ++od) {
      const int id = od * d.stride + kd - d.pad;
      for (int oh = oh_lo; oh <= oh_hi; ++oh) {
        const int ih = oh * d.stride + kh - d.pad;
        const T* irow = inc + id * in_hw + static_cast<std::ptrdiff_t>(ih) * d.in_w;
        const T* gorow = goc + od * out_hw + static_cast<std::ptrdiff_t>(oh) * d.out_w;
        for (int ow = ow_lo; ow <= ow_hi; ++ow) acc += gorow[ow] * irow[ow * d.stride + base];
      }
    }
    gwrow[kw] += acc;
  }
}

template <typename T>
inline void conv3d_bwd_bias_one(const T* gout, T* gb, const Conv3dDims& d, long long co) {
  const std::ptrdiff_t out_chw = static_cast<std::ptrdiff_t>(d.out_d) * d.out_h * d.out_w;
  const T* goc = gout + co * out_chw;
  T acc = T(0);
  for (std::ptrdiff_t i = 0; i < out_chw; ++i) acc += goc[i];
  gb[co] += acc;
}

template <typename T>
inline void convt3d_fwd_row(const T* in, const T* w, const T* b, T* out, const ConvT3dDims& d,
                            long long row) {
  const int co = static_cast<int>(row / (d.out_d * d.out_h));
  const int rem = static_cast<int>(row % (d.out_d * d.out_h));
  const int yd = rem / d.out_h;
  const int yh = rem % d.out_h;

  const std::ptrdiff_t in_hw = static_cast<std::ptrdiff_t>(d.in_h) * d.in_w;
  const std::ptrdiff_t in_chw = d.in_d * in_hw;
  const int kk = d.k * d.k * d.k;

  T* orow = out + ((static_cast<std::ptrdiff_t>(co) * d.out_d + yd) * d.out_h + yh) * d.out_w;
  const T bias = b ? b[co] : T(0);
  for (int yw = 0; yw < d.out_w; ++yw) orow[yw] = bias;

  for (int ci = 0; ci < d.cin; ++ci) {
    const T* inc = in + ci * in_chw;
    const T* wcc = w + (static_cast<std::ptrdiff_t>(ci) * d.cout + co) * kk;
    for (int kd = 0; kd < d.k; ++kd) {
      const int dnum = yd - kd;
      if (dnum < 0 || dnum % d.stride) continue;
      const int xd = dnum / d.stride;
      if (xd >= d.in_d) continue;
      for (int kh = 0; kh < d.k; ++kh) {
        const int hnum = yh - kh;
        if (hnum < 0 || hnum % d.stride) continue;
        const int xh = hnum / d.stride;
        if (xh >= d.in_h) continue;
        const T* irow = inc + xd * in_hw + static_cast<std::ptrdiff_t>(xh) * d.in_w;
        const T* wrow = wcc + (kd * d.k + kh) * d.k;
        for (int kw = 0; kw < d.k; ++kw) {
          const T wv = wrow[kw];
          const int xw_hi = std::min(d.in_w - 1, (d.out_w - 1 - kw) / d.stride);
          for (int xw = 0; xw <= xw_hi; ++xw) orow[xw * d.stride + kw] += irow[xw] * wv;
        }
      }
    }
  }
}

template <typename T>
inline void convt3d_bwd_input_row(const T* gout, const T* w, T* gin, const ConvT3dDims& d,
                                  long long row) {
  const int ci = static_cast<int>(row / (d.in_d * d.in_h));
  const int rem = static_cast<int>(row % (d.in_d * d.in_h));
  const int xd = rem / d.in_h;
  const int xh = rem % d.in_h;

  const std::ptrdiff_t out_hw = static_cast<std::ptrdiff_t>(d.out_h) * d.out_w;
  const std::ptrdiff_t out_chw = d.out_d * out_hw;
  const int kk = d.k * d.k * d.k;

  T* grow = gin + ((static_cast<std::ptrdiff_t>(ci) * d.in_d + xd) * d.in_h + xh) * d.in_w;

  for (int co = 0; co < d.cout; ++co) {
    const T* goc = gout + co * out_chw;
    const T* wcc = w + (static_cast<std::ptrdiff_t>(ci) * d.cout + co) * kk;
    for (int kd = 0; kd < d.k; ++kd) {
      const std::ptrdiff_t yd = static_cast<std::ptrdiff_t>(xd) * d.stride + kd;
      for (int kh = 0; kh < d.k; ++kh) {
        const std::ptrdiff_t yh = static_cast<std::ptrdiff_t>(xh) * d.stride + kh;
        const T* gorow = goc + yd * out_hw + yh * d.out_w;
        const T* wrow = wcc + (kd * d.k + kh) * d.k;
        for (int kw = 0; kw < d.k; ++kw) {
          const T wv = wrow[kw];
          for (int xw = 0; xw < d.in_w; ++xw) grow[xw] += gorow[xw * d.stride + kw] * wv;
        }
      }
    }
  }
}

template <typename T>
inline void convt3d_bwd_weight_row(const T* gout, const T* in, T* gw, const ConvT3dDims& d,
                                   long long row) {
  const int kh = static_cast<int>(row % d.k);
  long long r = row / d.k;
  const int kd = static_cast<int>(r % d.k);
  r /= d.k;
  const int co = static_cast<int>(r % d.cout);
  const int ci = static_cast<int>(r / d.cout);

  const std::ptrdiff_t in_hw = static_cast<std::ptrdiff_t>(d.in_h) * d.in_w;
  const std::ptrdiff_t in_chw = d.in_d * in_hw;
  const std::ptrdiff_t out_hw = static_cast<std::ptrdiff_t>(d.out_h) * d.out_w;
  const std::ptrdiff_t out_chw = d.out_d * out_hw;

  T* gwrow = gw + (((static_cast<std::ptrdiff_t>(ci) * d.cout + co) * d.k + kd) * d.k + kh) * d.k;
  const T* inc = in + ci * in_chw;
  const T* goc = gout + co * out_chw;

  for (int kw = 0; kw < d.k; ++kw) {
    T acc = T(0);
    for (int xd = 0; xd < d.in_d; ++xd) {
      const std::ptrdiff_t yd = static_cast<std::ptrdiff_t>(xd) * d.stride + kd;
      for (int xh = 0; xh < d.in_h; ++xh) {
        const std::ptrdiff_t yh = static_cast<std::ptrdiff_t>(xh) * d.stride + kh;
        const T* irow = inc + xd * in_hw + static_cast<std::ptrdiff_t>(xh) * d.in_w;
        const T* gorow = goc + yd * out_hw + yh * d.out_w;
        for (int xw = 0; xw < d.in_w; ++xw) acc += irow[xw] * gorow[xw * d.stride + kw];
      }
    }
    gwrow[kw] += acc;
  }
}

template <typename T>
inline void matmul_nn_row(const T* a, const T* b, T* c, int k, int n, long long i) {
  const T* arow = a + i * k;
  T* crow = c + i * n;
  for (int j = 0; j < n; ++j) crow[j] = T(0);
  for (int kk = 0; kk < k; ++kk) {
    const T av = arow[kk];
    const T* brow = b + static_cast<std::ptrdiff_t>(kk) * n;
    for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

// c[m,n] += a[m,k] * b[n,k]^T
template <typename T>
inline void matmul_nt_acc_row(const T* a, const T* b, T* c, int k, int n, long long i) {
  const T* arow = a + i * k;
  T* crow = c + i * n;
  for (int j = 0; j < n; ++j) {
    const T* brow = b + static_cast<std::ptrdiff_t>(j) * k;
    T acc = T(0);
    for (int kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
    crow[j] += acc;
  }
}

// c[k,n] += a[m,k]^T * b[m,n]; one row = row i of c.
template <typename T>
inline void matmul_tn_acc_row(const T* a, const T* b, T* c, int m, int k, int n, long long i) {
  T* crow = c + i * n;
  for (int mm = 0; mm < m; ++mm) {
    const T av = a[static_cast<std::ptrdiff_t>(mm) * k + i];
    const T* brow = b + static_cast<std::ptrdiff_t>(mm) * n;
    for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

}  // namespace tabs::kernels::core
