#pragma once

#include <cstddef>

#include "tabs/common.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

// Compute kernels behind the tensor ops. Each kernel exists twice: a serial
// reference in kernels::serial and an OpenMP version in kernels::par. The
// parallel loops split work by output element only; the per-element reduction
// code is shared, so both variants produce bitwise-identical results (tested
// in test_kernels, timed in bench_kernels). The unqualified names dispatch on
// active_exec().

namespace tabs::kernels {

struct Conv3dDims {
  int cin = 0, cout = 0;
  int in_d = 0, in_h = 0, in_w = 0;
  int k = 0, stride = 1, pad = 0;
  int out_d = 0, out_h = 0, out_w = 0;
};

// Transposed conv; weight layout [cin][cout][k][k][k]. out = (in-1)*stride + k.
struct ConvT3dDims {
  int cin = 0, cout = 0;
  int in_d = 0, in_h = 0, in_w = 0;
  int k = 0, stride = 1;
  int out_d = 0, out_h = 0, out_w = 0;
};

#define TABS_KERNEL_DECLS                                                                  \
  template <typename T>                                                                    \
  void conv3d_forward(const T* in, const T* w, const T* b, T* out, const Conv3dDims& d);   \
  template <typename T>                                                                    \
  void conv3d_backward_input(const T* gout, const T* w, T* gin, const Conv3dDims& d);      \
  template <typename T>                                                                    \
  void conv3d_backward_weight(const T* gout, const T* in, T* gw, const Conv3dDims& d);     \
  template <typename T>                                                                    \
  void conv3d_backward_bias(const T* gout, T* gb, const Conv3dDims& d);                    \
  template <typename T>                                                                    \
  void convt3d_forward(const T* in, const T* w, const T* b, T* out, const ConvT3dDims& d); \
  template <typename T>                                                                    \
  void convt3d_backward_input(const T* gout, const T* w, T* gin, const ConvT3dDims& d);    \
  template <typename T>                                                                    \
  void convt3d_backward_weight(const T* gout, const T* in, T* gw, const ConvT3dDims& d);   \
  template <typename T>                                                                    \
  void matmul_nn(const T* a, const T* b, T* c, int m, int k, int n);                       \
  template <typename T>                                                                    \
  void matmul_nt_acc(const T* a, const T* b, T* c, int m, int k, int n);                   \
  template <typename T>                                                                    \
  void matmul_tn_acc(const T* a, const T* b, T* c, int m, int k, int n);

namespace serial {
TABS_KERNEL_DECLS
}
namespace par {
TABS_KERNEL_DECLS
}
TABS_KERNEL_DECLS

#undef TABS_KERNEL_DECLS

#define TABS_KERNEL_EXTERN(T)                                                                    \
  extern template void conv3d_forward<T>(const T*, const T*, const T*, T*, const Conv3dDims&);  \
  extern template void conv3d_backward_input<T>(const T*, const T*, T*, const Conv3dDims&);     \
  extern template void conv3d_backward_weight<T>(const T*, const T*, T*, const Conv3dDims&);    \
  extern template void conv3d_backward_bias<T>(const T*, T*, const Conv3dDims&);                \
  extern template void convt3d_forward<T>(const T*, const T*, const T*, T*, const ConvT3dDims&);\
  extern template void convt3d_backward_input<T>(const T*, const T*, T*, const ConvT3dDims&);   \
  extern template void convt3d_backward_weight<T>(const T*, const T*, T*, const ConvT3dDims&);  \
  extern template void matmul_nn<T>(const T*, const T*, T*, int, int, int);                     \
  extern template void matmul_nt_acc<T>(const T*, const T*, T*, int, int, int);                 \
  extern template void matmul_tn_acc<T>(const T*, const T*, T*, int, int, int);

namespace serial {
TABS_KERNEL_EXTERN(float)
TABS_KERNEL_EXTERN(double)
}
namespace par {
TABS_KERNEL_EXTERN(float)
TABS_KERNEL_EXTERN(double)
}
TABS_KERNEL_EXTERN(float)
TABS_KERNEL_EXTERN(double)

#undef TABS_KERNEL_EXTERN

// Runs fn(i) for i in [0,n). Parallel when the active mode allows; fn must
// write only state owned by index i.
template <typename F>
inline void parallel_for(std::size_t n, F&& fn) {
#ifdef _OPENMP
  if (active_exec() == Exec::parallel && n > 1) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i) fn(static_cast<std::size_t>(i));
    return;
  }
#endif
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

}  // namespace tabs::kernels
