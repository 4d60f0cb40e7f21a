#include "kernels_core.hpp"

namespace tabs::kernels::serial {

template <typename T>
void conv3d_forward(const T* in, const T* w, const T* b, T* out, const Conv3dDims& d) {
  const long long rows = 1LL * d.cout * d.out_d * d.out_h;
  for (long long r = 0; r < rows; ++r) core::conv3d_fwd_row(in, w, b, out, d, r);
}

template <typename T>
void conv3d_backward_input(const T* gout, const T* w, T* gin, const Conv3dDims& d) {
  const long long rows = 1LL * d.cin * d.in_d * d.in_h;
  for (long long r = 0; r < rows; ++r) core::conv3d_bwd_input_row(gout, w, gin, d, r);
}

template <typename T>
void conv3d_backward_weight(const T* gout, const T* in, T* gw, const Conv3dDims& d) {
  const long long rows = 1LL * d.cout * d.cin * d.k * d.k;
  for (long long r = 0; r < rows; ++r) core::conv3d_bwd_weight_row(gout, in, gw, d, r);
}

template <typename T>
void conv3d_backward_bias(const T* gout, T* gb, const Conv3dDims& d) {
  for (long long co = 0; co < d.cout; ++co) core::conv3d_bwd_bias_one(gout, gb, d, co);
}

template <typename T>
void convt3d_forward(const T* in, const T* w, const T* b, T* out, const ConvT3dDims& d) {
  const long long rows = 1LL * d.cout * d.out_d * d.out_h;
  for (long long r = 0; r < rows; ++r) core::convt3d_fwd_row(in, w, b, out, d, r);
}

template <typename T>
void convt3d_backward_input(const T* gout, const T* w, T* gin, const ConvT3dDims& d) {
  const long long rows = 1LL * d.cin * d.in_d * d.in_h;
  for (long long r = 0; r < rows; ++r) core::convt3d_bwd_input_row(gout, w, gin, d, r);
}

template <typename T>
void convt3d_backward_weight(const T* gout, const T* in, T* gw, const ConvT3dDims& d) {
  const long long rows = 1LL * d.cin * d.cout * d.k * d.k;
  for (long long r = 0; r < rows; ++r) core::convt3d_bwd_weight_row(gout, in, gw, d, r);
}

template <typename T>
void matmul_nn(const T* a, const T* b, T* c, int m, int k, int n) {
  for (long long i = 0; i < m; ++i) core::matmul_nn_row(a, b, c, k, n, i);
}

template <typename T>
void matmul_nt_acc(const T* a, const T* b, T* c, int m, int k, int n) {
  for (long long i = 0; i < m; ++i) core::matmul_nt_acc_row(a, b, c, k, n, i);
}

template <typename T>
void matmul_tn_acc(const T* a, const T* b, T* c, int m, int k, int n) {
  for (long long i = 0; i < k; ++i) core::matmul_tn_acc_row(a, b, c, m, k, n, i);
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

}  // namespace tabs::kernels::serial
