#include "tabs/kernels.hpp"

namespace tabs::kernels {

namespace {
inline bool use_par() { return active_exec() == Exec::parallel; }
}  // namespace

template <typename T>
void conv3d_forward(const T* in, const T* w, const T* b, T* out, const Conv3dDims& d) {
  use_par() ? par::conv3d_forward(in, w, b, out, d) : serial::conv3d_forward(in, w, b, out, d);
}

template <typename T>
void conv3d_backward_input(const T* gout, const T* w, T* gin, const Conv3dDims& d) {
  use_par() ? par::conv3d_backward_input(gout, w, gin, d)
            : serial::conv3d_backward_input(gout, w, gin, d);
}

template <typename T>
void conv3d_backward_weight(const T* gout, const T* in, T* gw, const Conv3dDims& d) {
  use_par() ? par::conv3d_backward_weight(gout, in, gw, d)
            : serial::conv3d_backward_weight(gout, in, gw, d);
}

template <typename T>
void conv3d_backward_bias(const T* gout, T* gb, const Conv3dDims& d) {
  use_par() ? par::conv3d_backward_bias(gout, gb, d) : serial::conv3d_backward_bias(gout, gb, d);
}

template <typename T>
void convt3d_forward(const T* in, const T* w, const T* b, T* out, const ConvT3dDims& d) {
  use_par() ? par::convt3d_forward(in, w, b, out, d) : serial::convt3d_forward(in, w, b, out, d);
}

template <typename T>
void convt3d_backward_input(const T* gout, const T* w, T* gin, const ConvT3dDims& d) {
  use_par() ? par::convt3d_backward_input(gout, w, gin, d)
            : serial::convt3d_backward_input(gout, w, gin, d);
}

template <typename T>
void convt3d_backward_weight(const T* gout, const T* in, T* gw, const ConvT3dDims& d) {
  use_par() ? par::convt3d_backward_weight(gout, in, gw, d)
            : serial::convt3d_backward_weight(gout, in, gw, d);
}

template <typename T>
void matmul_nn(const T* a, const T* b, T* c, int m, int k, int n) {
  use_par() ? par::matmul_nn(a, b, c, m, k, n) : serial::matmul_nn(a, b, c, m, k, n);
}

template <typename T>
void matmul_nt_acc(const T* a, const T* b, T* c, int m, int k, int n) {
  use_par() ? par::matmul_nt_acc(a, b, c, m, k, n) : serial::matmul_nt_acc(a, b, c, m, k, n);
}

template <typename T>
void matmul_tn_acc(const T* a, const T* b, T* c, int m, int k, int n) {
  use_par() ? par::matmul_tn_acc(a, b, c, m, k, n) : serial::matmul_tn_acc(a, b, c, m, k, n);
}

#define TABS_KERNEL_INSTANTIATE(T)                                                         \
  template void conv3d_forward<T>(const T*, const T*, const T*, T*, const Conv3dDims&);    \
  template void conv3d_backward_input<T>(const T*, const T*, T*, const Conv3dDims&);       \
  template void conv3d_backward_weight<T>(const T*, const T*, T*, const Conv3dDims&);      \
  template void conv3d_backward_bias<T>(const T*, T*, const Conv3dDims&);                  \
  template void convt3d_forward<T>(const T*, const T*, const T*, T*, const ConvT3dDims&);  \
  template void convt3d_backward_input<T>(const T*, const T*, T*, const ConvT3dDims&);     \
  template void convt3d_backward_weight<T>(const T*, const T*, T*, const ConvT3dDims&);    \
  template void matmul_nn<T>(const T*, const T*, T*, int, int, int);                       \
  template void matmul_nt_acc<T>(const T*, const T*, T*, int, int, int);                   \
  template void matmul_tn_acc<T>(const T*, const T*, T*, int, int, int);

TABS_KERNEL_INSTANTIATE(float)
TABS_KERNEL_INSTANTIATE(double)

#undef TABS_KERNEL_INSTANTIATE

}  // namespace tabs::kernels
