// Named gradient-check cases over every differentiable op and block, shared
// by test_gradcheck (per-case assertions) and the acceptance binary (timed
// whole-suite run). Each case builds fresh random double inputs and returns
// the worst relative error between reverse-mode and central differences.
#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "tabs/blocks.hpp"
#include "tabs/ops.hpp"

namespace gradsuite {

using tabs::Shape;
using tabs::TensorT;
using DTensor = TensorT<double>;

struct GradCase {
  std::string name;
  std::function<double(std::mt19937&)> run;
};

// Weighted sum against a fixed random tensor; a plain sum would zero out the
// gradients of normalizing ops (softmax rows sum to 1 regardless of input).
inline DTensor weighted(const DTensor& y, const DTensor& c) {
  return tabs::ops::sum(tabs::ops::mul(y, c));
}

inline std::vector<GradCase> gradient_suite() {
  using namespace tabs;
  std::vector<GradCase> cases;

  cases.push_back({"add_mul_scalar", [](std::mt19937& rng) {
    auto a = oracle::random_dtensor(Shape{3, 4}, rng);
    auto b = oracle::random_dtensor(Shape{3, 4}, rng);
    auto c = oracle::random_dtensor(Shape{3, 4}, rng);
    return oracle::max_grad_rel_err({&a, &b}, [&] {
      return weighted(ops::scalar_mul(ops::mul(ops::add(a, b), b), 1.5), c);
    });
  }});

  cases.push_back({"relu", [](std::mt19937& rng) {
    // keep inputs away from the kink at 0
    auto a = oracle::random_dtensor(Shape{4, 4}, rng, 0.2, 1.0);
    std::uniform_int_distribution<int> flip(0, 1);
    for (auto& v : a.raw_data())
      if (flip(rng)) v = -v;
    auto c = oracle::random_dtensor(Shape{4, 4}, rng);
    return oracle::max_grad_rel_err({&a}, [&] { return weighted(ops::relu(a), c); });
  }});

  cases.push_back({"sigmoid", [](std::mt19937& rng) {
    auto a = oracle::random_dtensor(Shape{3, 5}, rng, -2.0, 2.0);
    auto c = oracle::random_dtensor(Shape{3, 5}, rng);
    return oracle::max_grad_rel_err({&a}, [&] { return weighted(ops::sigmoid(a), c); });
  }});

  cases.push_back({"matmul", [](std::mt19937& rng) {
    auto a = oracle::random_dtensor(Shape{3, 4}, rng);
    auto b = oracle::random_dtensor(Shape{4, 2}, rng);
    auto c = oracle::random_dtensor(Shape{3, 2}, rng);
    return oracle::max_grad_rel_err({&a, &b}, [&] { return weighted(ops::matmul(a, b), c); });
  }});

  cases.push_back({"linear", [](std::mt19937& rng) {
    auto x = oracle::random_dtensor(Shape{3, 4}, rng);
    auto w = oracle::random_dtensor(Shape{4, 5}, rng);
    auto b = oracle::random_dtensor(Shape{5}, rng);
    auto c = oracle::random_dtensor(Shape{3, 5}, rng);
    return oracle::max_grad_rel_err({&x, &w, &b},
                                    [&] { return weighted(ops::linear(x, w, b), c); });
  }});

  cases.push_back({"transpose2d", [](std::mt19937& rng) {
    auto a = oracle::random_dtensor(Shape{3, 5}, rng);
    auto c = oracle::random_dtensor(Shape{5, 3}, rng);
    return oracle::max_grad_rel_err({&a}, [&] { return weighted(ops::transpose2d(a), c); });
  }});

  cases.push_back({"slice_concat_cols", [](std::mt19937& rng) {
    auto a = oracle::random_dtensor(Shape{3, 6}, rng);
    auto c = oracle::random_dtensor(Shape{3, 6}, rng);
    return oracle::max_grad_rel_err({&a}, [&] {
      auto left = ops::slice_cols(a, 0, 2);
      auto right = ops::slice_cols(a, 2, 6);
      return weighted(ops::concat_cols(std::vector<DTensor>{right, left}),
                      c);  // permuted reassembly still covers every element
    });
  }});

  cases.push_back({"softmax", [](std::mt19937& rng) {
    auto a = oracle::random_dtensor(Shape{3, 5}, rng, -2.0, 2.0);
    auto c = oracle::random_dtensor(Shape{3, 5}, rng);
    double worst = 0.0;
    for (std::size_t axis : {std::size_t(0), std::size_t(1)})
      worst = std::max(worst, oracle::max_grad_rel_err(
                                  {&a}, [&] { return weighted(ops::softmax(a, axis), c); }));
    return worst;
  }});

  cases.push_back({"layer_norm", [](std::mt19937& rng) {
    auto x = oracle::random_dtensor(Shape{3, 6}, rng);
    auto gamma = oracle::random_dtensor(Shape{6}, rng, 0.5, 1.5);
    auto beta = oracle::random_dtensor(Shape{6}, rng);
    auto c = oracle::random_dtensor(Shape{3, 6}, rng);
    return oracle::max_grad_rel_err(
        {&x, &gamma, &beta}, [&] { return weighted(ops::layer_norm(x, gamma, beta), c); });
  }});

  cases.push_back({"group_norm", [](std::mt19937& rng) {
    auto x = oracle::random_dtensor(Shape{4, 2, 2, 2}, rng);
    auto gamma = oracle::random_dtensor(Shape{4}, rng, 0.5, 1.5);
    auto beta = oracle::random_dtensor(Shape{4}, rng);
    auto c = oracle::random_dtensor(Shape{4, 2, 2, 2}, rng);
    return oracle::max_grad_rel_err(
        {&x, &gamma, &beta}, [&] { return weighted(ops::group_norm(x, gamma, beta, 2), c); });
  }});

  cases.push_back({"conv3d_s1", [](std::mt19937& rng) {
    auto x = oracle::random_dtensor(Shape{2, 3, 3, 3}, rng);
    auto w = oracle::random_dtensor(Shape{3, 2, 3, 3, 3}, rng);
    auto b = oracle::random_dtensor(Shape{3}, rng);
    auto c = oracle::random_dtensor(Shape{3, 3, 3, 3}, rng);
    return oracle::max_grad_rel_err({&x, &w, &b},
                                    [&] { return weighted(ops::conv3d(x, w, b, 1, 1), c); });
  }});

  cases.push_back({"conv3d_s2", [](std::mt19937& rng) {
    auto x = oracle::random_dtensor(Shape{2, 4, 4, 4}, rng);
    auto w = oracle::random_dtensor(Shape{2, 2, 3, 3, 3}, rng);
    auto b = oracle::random_dtensor(Shape{2}, rng);
    auto c = oracle::random_dtensor(Shape{2, 2, 2, 2}, rng);
    return oracle::max_grad_rel_err({&x, &w, &b},
                                    [&] { return weighted(ops::conv3d(x, w, b, 2, 1), c); });
  }});

  cases.push_back({"conv_transpose3d", [](std::mt19937& rng) {
    auto x = oracle::random_dtensor(Shape{2, 2, 2, 2}, rng);
    auto w = oracle::random_dtensor(Shape{2, 3, 2, 2, 2}, rng);
    auto b = oracle::random_dtensor(Shape{3}, rng);
    auto c = oracle::random_dtensor(Shape{3, 4, 4, 4}, rng);
    return oracle::max_grad_rel_err(
        {&x, &w, &b}, [&] { return weighted(ops::conv_transpose3d(x, w, b, 2), c); });
  }});

  cases.push_back({"concat_channels", [](std::mt19937& rng) {
    auto a = oracle::random_dtensor(Shape{2, 2, 2, 2}, rng);
    auto b = oracle::random_dtensor(Shape{1, 2, 2, 2}, rng);
    auto c = oracle::random_dtensor(Shape{3, 2, 2, 2}, rng);
    return oracle::max_grad_rel_err(
        {&a, &b}, [&] { return weighted(ops::concat_channels(a, b), c); });
  }});

  cases.push_back({"global_avg_pool", [](std::mt19937& rng) {
    auto x = oracle::random_dtensor(Shape{3, 2, 2, 2}, rng);
    auto c = oracle::random_dtensor(Shape{3}, rng);
    return oracle::max_grad_rel_err({&x}, [&] { return weighted(ops::global_avg_pool(x), c); });
  }});

  cases.push_back({"channel_scale", [](std::mt19937& rng) {
    auto x = oracle::random_dtensor(Shape{3, 2, 2, 2}, rng);
    auto s = oracle::random_dtensor(Shape{3}, rng, 0.2, 1.0);
    auto c = oracle::random_dtensor(Shape{3, 2, 2, 2}, rng);
    return oracle::max_grad_rel_err({&x, &s},
                                    [&] { return weighted(ops::channel_scale(x, s), c); });
  }});

  cases.push_back({"add_row_bias_reshape", [](std::mt19937& rng) {
    auto a = oracle::random_dtensor(Shape{4, 3}, rng);
    auto b = oracle::random_dtensor(Shape{3}, rng);
    auto c = oracle::random_dtensor(Shape{2, 6}, rng);
    return oracle::max_grad_rel_err({&a, &b}, [&] {
      return weighted(ops::reshape(ops::add_row_bias(a, b), Shape{2, 6}), c);
    });
  }});

  cases.push_back({"mse_loss", [](std::mt19937& rng) {
    auto pred = oracle::random_dtensor(Shape{3, 2, 2, 2}, rng);
    auto target = oracle::random_dtensor(Shape{3, 2, 2, 2}, rng);
    return oracle::max_grad_rel_err({&pred, &target},
                                    [&] { return ops::mse(pred, target); });
  }});

  cases.push_back({"masked_mse_loss", [](std::mt19937& rng) {
    auto pred = oracle::random_dtensor(Shape{3, 2, 2, 2}, rng);
    auto target = oracle::random_dtensor(Shape{3, 2, 2, 2}, rng);
    DTensor mask(Shape{8}, std::vector<double>{1, 0, 1, 1, 0, 1, 1, 0});
    return oracle::max_grad_rel_err({&pred, &target},
                                    [&] { return ops::masked_mse(pred, target, mask); });
  }});

  cases.push_back({"mean_sum", [](std::mt19937& rng) {
    auto a = oracle::random_dtensor(Shape{2, 3}, rng);
    return oracle::max_grad_rel_err(
        {&a}, [&] { return ops::add(ops::mean(ops::mul(a, a)), ops::scalar_mul(ops::sum(a), 0.25)); });
  }});

  cases.push_back({"attention", [](std::mt19937& rng) {
    blocks::AttentionParams<double> p;
    p.wq = oracle::random_dtensor(Shape{6, 6}, rng, -0.5, 0.5);
    p.bq = oracle::random_dtensor(Shape{6}, rng, -0.1, 0.1);
    p.wk = oracle::random_dtensor(Shape{6, 6}, rng, -0.5, 0.5);
    p.bk = oracle::random_dtensor(Shape{6}, rng, -0.1, 0.1);
    p.wv = oracle::random_dtensor(Shape{6, 6}, rng, -0.5, 0.5);
    p.bv = oracle::random_dtensor(Shape{6}, rng, -0.1, 0.1);
    p.wo = oracle::random_dtensor(Shape{6, 6}, rng, -0.5, 0.5);
    p.bo = oracle::random_dtensor(Shape{6}, rng, -0.1, 0.1);
    auto x = oracle::random_dtensor(Shape{4, 6}, rng);
    auto c = oracle::random_dtensor(Shape{4, 6}, rng);
    return oracle::max_grad_rel_err(
        {&x, &p.wq, &p.bq, &p.wk, &p.bk, &p.wv, &p.bv, &p.wo, &p.bo},
        [&] { return weighted(blocks::attention(x, p, 2), c); });
  }});

  cases.push_back({"transformer_layer", [](std::mt19937& rng) {
    blocks::TransformerLayerParams<double> p;
    auto mat = [&](std::size_t r, std::size_t cdim) {
      return oracle::random_dtensor(Shape{r, cdim}, rng, -0.5, 0.5);
    };
    p.att.wq = mat(4, 4);
    p.att.bq = oracle::random_dtensor(Shape{4}, rng, -0.1, 0.1);
    p.att.wk = mat(4, 4);
    p.att.bk = oracle::random_dtensor(Shape{4}, rng, -0.1, 0.1);
    p.att.wv = mat(4, 4);
    p.att.bv = oracle::random_dtensor(Shape{4}, rng, -0.1, 0.1);
    p.att.wo = mat(4, 4);
    p.att.bo = oracle::random_dtensor(Shape{4}, rng, -0.1, 0.1);
    p.ln1_gamma = oracle::random_dtensor(Shape{4}, rng, 0.5, 1.5);
    p.ln1_beta = oracle::random_dtensor(Shape{4}, rng, -0.1, 0.1);
    p.ffn_w1 = mat(4, 8);
    p.ffn_b1 = oracle::random_dtensor(Shape{8}, rng, 0.2, 0.6);  // keep relu inputs off zero
    p.ffn_w2 = mat(8, 4);
    p.ffn_b2 = oracle::random_dtensor(Shape{4}, rng, -0.1, 0.1);
    p.ln2_gamma = oracle::random_dtensor(Shape{4}, rng, 0.5, 1.5);
    p.ln2_beta = oracle::random_dtensor(Shape{4}, rng, -0.1, 0.1);
    auto x = oracle::random_dtensor(Shape{3, 4}, rng);
    auto c = oracle::random_dtensor(Shape{3, 4}, rng);
    return oracle::max_grad_rel_err(
        {&x, &p.att.wq, &p.att.wv, &p.ffn_w1, &p.ffn_w2, &p.ln1_gamma, &p.ln2_beta},
        [&] { return weighted(blocks::transformer_layer(x, p, 2), c); });
  }});

  cases.push_back({"se_block", [](std::mt19937& rng) {
    blocks::SeParams<double> p;
    p.w1 = oracle::random_dtensor(Shape{4, 2}, rng, -0.5, 0.5);
    p.b1 = oracle::random_dtensor(Shape{2}, rng, 0.2, 0.6);
    p.w2 = oracle::random_dtensor(Shape{2, 4}, rng, -0.5, 0.5);
    p.b2 = oracle::random_dtensor(Shape{4}, rng, -0.1, 0.1);
    auto x = oracle::random_dtensor(Shape{4, 2, 2, 2}, rng);
    auto c = oracle::random_dtensor(Shape{4, 2, 2, 2}, rng);
    return oracle::max_grad_rel_err({&x, &p.w1, &p.b1, &p.w2, &p.b2},
                                    [&] { return weighted(blocks::se_block(x, p), c); });
  }});

  return cases;
}

}  // namespace gradsuite
