// Times the serial reference kernels against the OpenMP variants on the
// heaviest shapes of the desk-scale forward/backward pass and checks the two
// backends agree bit for bit.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <random>
#include <vector>

#include "tabs/kernels.hpp"

using namespace tabs;
using Clock = std::chrono::steady_clock;

namespace {

std::vector<float> random_vec(std::size_t n, std::mt19937& rng) {
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

bool bitwise_equal(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * 4) == 0;
}

void bench_conv3d(int cin, int cout, int edge, int k, int stride, int pad, int reps) {
  kernels::Conv3dDims d;
  d.cin = cin;
  d.cout = cout;
  d.in_d = d.in_h = d.in_w = edge;
  d.k = k;
  d.stride = stride;
  d.pad = pad;
  d.out_d = d.out_h = d.out_w = (edge + 2 * pad - k) / stride + 1;

  std::mt19937 rng(17);
  const auto x = random_vec(std::size_t(cin) * edge * edge * edge, rng);
  const auto w = random_vec(std::size_t(cout) * cin * k * k * k, rng);
  const auto b = random_vec(cout, rng);
  const std::size_t out_n = std::size_t(cout) * d.out_d * d.out_h * d.out_w;
  std::vector<float> y_serial(out_n), y_par(out_n);

  auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r)
    kernels::serial::conv3d_forward(x.data(), w.data(), b.data(), y_serial.data(), d);
  const double t_serial = ms_since(t0) / reps;

  t0 = Clock::now();
  for (int r = 0; r < reps; ++r)
    kernels::par::conv3d_forward(x.data(), w.data(), b.data(), y_par.data(), d);
  const double t_par = ms_since(t0) / reps;

  std::printf("conv3d %dx%d^3 -> %d ch, k=%d s=%d: serial %.2f ms, omp %.2f ms, x%.2f, %s\n",
              cin, edge, cout, k, stride, t_serial, t_par, t_serial / t_par,
              bitwise_equal(y_serial, y_par) ? "bitwise equal" : "MISMATCH");
}

void bench_matmul(int m, int kk, int n, int reps) {
  std::mt19937 rng(23);
  const auto a = random_vec(std::size_t(m) * kk, rng);
  const auto b = random_vec(std::size_t(kk) * n, rng);
  std::vector<float> c_serial(std::size_t(m) * n), c_par(std::size_t(m) * n);

  auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r)
    kernels::serial::matmul_nn(a.data(), b.data(), c_serial.data(), m, kk, n);
  const double t_serial = ms_since(t0) / reps;

  t0 = Clock::now();
  for (int r = 0; r < reps; ++r)
    kernels::par::matmul_nn(a.data(), b.data(), c_par.data(), m, kk, n);
  const double t_par = ms_since(t0) / reps;

  std::printf("matmul %dx%dx%d: serial %.2f ms, omp %.2f ms, x%.2f, %s\n", m, kk, n, t_serial,
              t_par, t_serial / t_par, bitwise_equal(c_serial, c_par) ? "bitwise equal" : "MISMATCH");
}

}  // namespace

int main() {
  bench_conv3d(1, 16, 32, 3, 1, 1, 5);
  bench_conv3d(16, 16, 32, 3, 1, 1, 3);
  bench_conv3d(16, 32, 16, 3, 2, 1, 5);
  bench_matmul(512, 512, 512, 3);
  bench_matmul(64, 2048, 64, 5);
  return 0;
}
