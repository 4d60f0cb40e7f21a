#include <doctest.h>

#include <cstdlib>
#include <cstring>
#include <random>
#include <vector>

#include "tabs/kernels.hpp"

using namespace tabs;
using kernels::Conv3dDims;
using kernels::ConvT3dDims;

namespace {

std::vector<float> randv(std::size_t n, std::mt19937& rng) {
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

bool bitwise_equal(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

Conv3dDims conv_dims(int cin, int cout, int edge, int k, int stride, int pad) {
  Conv3dDims d;
  d.cin = cin;
  d.cout = cout;
  d.in_d = d.in_h = d.in_w = edge;
  d.k = k;
  d.stride = stride;
  d.pad = pad;
  d.out_d = d.out_h = d.out_w = (edge + 2 * pad - k) / stride + 1;
  return d;
}

ConvT3dDims convt_dims(int cin, int cout, int edge, int k, int stride) {
  ConvT3dDims d;
  d.cin = cin;
  d.cout = cout;
  d.in_d = d.in_h = d.in_w = edge;
  d.k = k;
  d.stride = stride;
  d.out_d = d.out_h = d.out_w = (edge - 1) * stride + k;
  return d;
}

}  // namespace

TEST_CASE("conv3d kernels: serial and parallel are bitwise identical") {
  std::mt19937 rng(11);
  for (auto [cin, cout, edge, k, stride, pad] :
       {std::array<int, 6>{1, 1, 4, 1, 1, 0}, {2, 3, 6, 3, 1, 1}, {3, 2, 8, 3, 2, 1},
        {4, 4, 5, 2, 1, 0}, {1, 5, 7, 3, 2, 0}}) {
    auto d = conv_dims(cin, cout, edge, k, stride, pad);
    const std::size_t in_n = std::size_t(cin) * edge * edge * edge;
    const std::size_t out_n = std::size_t(cout) * d.out_d * d.out_h * d.out_w;
    const std::size_t w_n = std::size_t(cout) * cin * k * k * k;
    auto in = randv(in_n, rng);
    auto w = randv(w_n, rng);
    auto b = randv(cout, rng);
    auto gout = randv(out_n, rng);

    std::vector<float> o1(out_n), o2(out_n);
    kernels::serial::conv3d_forward(in.data(), w.data(), b.data(), o1.data(), d);
    kernels::par::conv3d_forward(in.data(), w.data(), b.data(), o2.data(), d);
    CHECK(bitwise_equal(o1, o2));

    std::vector<float> gi1(in_n, 0.5f), gi2(in_n, 0.5f);
    kernels::serial::conv3d_backward_input(gout.data(), w.data(), gi1.data(), d);
    kernels::par::conv3d_backward_input(gout.data(), w.data(), gi2.data(), d);
    CHECK(bitwise_equal(gi1, gi2));

    std::vector<float> gw1(w_n, 0.25f), gw2(w_n, 0.25f);
    kernels::serial::conv3d_backward_weight(gout.data(), in.data(), gw1.data(), d);
    kernels::par::conv3d_backward_weight(gout.data(), in.data(), gw2.data(), d);
    CHECK(bitwise_equal(gw1, gw2));

    std::vector<float> gb1(cout, -1.0f), gb2(cout, -1.0f);
    kernels::serial::conv3d_backward_bias(gout.data(), gb1.data(), d);
    kernels::par::conv3d_backward_bias(gout.data(), gb2.data(), d);
    CHECK(bitwise_equal(gb1, gb2));
  }
}

TEST_CASE("transposed conv kernels: serial and parallel are bitwise identical") {
  std::mt19937 rng(12);
  for (auto [cin, cout, edge, k, stride] :
       {std::array<int, 5>{1, 1, 3, 2, 2}, {2, 3, 4, 2, 2}, {3, 2, 5, 3, 1}, {4, 1, 2, 2, 2}}) {
    auto d = convt_dims(cin, cout, edge, k, stride);
    const std::size_t in_n = std::size_t(cin) * edge * edge * edge;
    const std::size_t out_n = std::size_t(cout) * d.out_d * d.out_h * d.out_w;
    const std::size_t w_n = std::size_t(cin) * cout * k * k * k;
    auto in = randv(in_n, rng);
    auto w = randv(w_n, rng);
    auto b = randv(cout, rng);
    auto gout = randv(out_n, rng);

    std::vector<float> o1(out_n), o2(out_n);
    kernels::serial::convt3d_forward(in.data(), w.data(), b.data(), o1.data(), d);
    kernels::par::convt3d_forward(in.data(), w.data(), b.data(), o2.data(), d);
    CHECK(bitwise_equal(o1, o2));

    std::vector<float> gi1(in_n, 0.5f), gi2(in_n, 0.5f);
    kernels::serial::convt3d_backward_input(gout.data(), w.data(), gi1.data(), d);
    kernels::par::convt3d_backward_input(gout.data(), w.data(), gi2.data(), d);
    CHECK(bitwise_equal(gi1, gi2));

    std::vector<float> gw1(w_n, 0.25f), gw2(w_n, 0.25f);
    kernels::serial::convt3d_backward_weight(gout.data(), in.data(), gw1.data(), d);
    kernels::par::convt3d_backward_weight(gout.data(), in.data(), gw2.data(), d);
    CHECK(bitwise_equal(gw1, gw2));
  }
}

TEST_CASE("matmul kernels: serial and parallel are bitwise identical") {
  std::mt19937 rng(13);
  for (auto [m, k, n] : {std::array<int, 3>{1, 1, 1}, {3, 4, 5}, {8, 8, 8}, {7, 13, 2}}) {
    auto a = randv(std::size_t(m) * k, rng);
    auto b = randv(std::size_t(k) * n, rng);
    std::vector<float> c1(std::size_t(m) * n), c2(c1);
    kernels::serial::matmul_nn(a.data(), b.data(), c1.data(), m, k, n);
    kernels::par::matmul_nn(a.data(), b.data(), c2.data(), m, k, n);
    CHECK(bitwise_equal(c1, c2));

    // accumulate variants add into a preloaded c
    auto bt = randv(std::size_t(n) * k, rng);
    std::vector<float> d1 = randv(std::size_t(m) * n, rng), d2 = d1;
    kernels::serial::matmul_nt_acc(a.data(), bt.data(), d1.data(), m, k, n);
    kernels::par::matmul_nt_acc(a.data(), bt.data(), d2.data(), m, k, n);
    CHECK(bitwise_equal(d1, d2));

    // tn accumulates a[m,k]^T * b[m,n] into c[k,n]
    auto gout = randv(std::size_t(m) * n, rng);
    std::vector<float> e1 = randv(std::size_t(k) * n, rng), e2 = e1;
    kernels::serial::matmul_tn_acc(a.data(), gout.data(), e1.data(), m, k, n);
    kernels::par::matmul_tn_acc(a.data(), gout.data(), e2.data(), m, k, n);
    CHECK(bitwise_equal(e1, e2));
  }
}

TEST_CASE("matmul_nn computes the textbook product") {
  // [[1,2],[3,4]] * I = [[1,2],[3,4]]
  std::vector<float> a{1, 2, 3, 4}, eye{1, 0, 0, 1}, c(4);
  kernels::serial::matmul_nn(a.data(), eye.data(), c.data(), 2, 2, 2);
  CHECK(c == std::vector<float>{1, 2, 3, 4});
  // nt_acc: C += A * B^T with B stored [n,k]
  std::vector<float> acc{10, 10, 10, 10};
  kernels::serial::matmul_nt_acc(a.data(), eye.data(), acc.data(), 2, 2, 2);
  CHECK(acc == std::vector<float>{11, 12, 13, 14});
}

TEST_CASE("dispatch follows the active execution mode") {
  auto prev = active_exec();
  std::mt19937 rng(14);
  auto d = conv_dims(2, 2, 5, 3, 1, 1);
  const std::size_t in_n = 2 * 125, out_n = 2 * 125, w_n = 2 * 2 * 27;
  auto in = randv(in_n, rng);
  auto w = randv(w_n, rng);
  auto b = randv(2, rng);
  std::vector<float> serial_out(out_n), via_dispatch(out_n);
  kernels::serial::conv3d_forward(in.data(), w.data(), b.data(), serial_out.data(), d);

  set_exec(Exec::serial);
  CHECK(active_exec() == Exec::serial);
  kernels::conv3d_forward(in.data(), w.data(), b.data(), via_dispatch.data(), d);
  CHECK(bitwise_equal(serial_out, via_dispatch));

  set_exec(Exec::parallel);
  if (!sequential_forced()) CHECK(active_exec() == Exec::parallel);
  kernels::conv3d_forward(in.data(), w.data(), b.data(), via_dispatch.data(), d);
  CHECK(bitwise_equal(serial_out, via_dispatch));  // modes agree bitwise

  set_exec(prev);
}

TEST_CASE("parallel_for covers every index exactly once") {
  std::vector<int> hits(1000, 0);
  kernels::parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) CHECK(h == 1);
}

TEST_CASE("eval jobs setting clamps to at least one") {
  int prev = eval_jobs();
  set_eval_jobs(4);
  if (!sequential_forced()) CHECK(eval_jobs() == 4);
  set_eval_jobs(0);
  CHECK(eval_jobs() == 1);
  set_eval_jobs(prev);
}
