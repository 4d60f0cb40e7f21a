#pragma once

#include <cmath>
#include <vector>

#include "tabs/ops.hpp"

// Composite differentiable blocks shared by the model variants and exercised
// directly by the gradient-check suite.

namespace tabs::blocks {

template <typename T>
struct AttentionParams {
  TensorT<T> wq, bq, wk, bk, wv, bv, wo, bo;
};

// Multi-head scaled dot-product self-attention on tokens x[n,d]. When
// attn_weights is given it receives the h per-head n-by-n softmax matrices.
template <typename T>
TensorT<T> attention(const TensorT<T>& x, const AttentionParams<T>& p, std::size_t heads,
                     std::vector<TensorT<T>>* attn_weights = nullptr) {
  const std::size_t d = x.extent(1);
  if (heads == 0 || d % heads)
    throw UsageError("attention: " + std::to_string(heads) + " heads do not divide dim " +
                     std::to_string(d));
  const std::size_t dh = d / heads;
  const T scale = T(1) / std::sqrt(T(dh));
  auto q = ops::linear(x, p.wq, p.bq);
  auto k = ops::linear(x, p.wk, p.bk);
  auto v = ops::linear(x, p.wv, p.bv);
  std::vector<TensorT<T>> parts;
  parts.reserve(heads);
  for (std::size_t hidx = 0; hidx < heads; ++hidx) {
    auto qi = ops::slice_cols(q, hidx * dh, (hidx + 1) * dh);
    auto ki = ops::slice_cols(k, hidx * dh, (hidx + 1) * dh);
    auto vi = ops::slice_cols(v, hidx * dh, (hidx + 1) * dh);
    auto scores = ops::scalar_mul(ops::matmul(qi, ops::transpose2d(ki)), scale);
    auto w = ops::softmax(scores, 1);
    if (attn_weights) attn_weights->push_back(w);
    parts.push_back(ops::matmul(w, vi));
  }
  return ops::linear(ops::concat_cols(parts), p.wo, p.bo);
}

template <typename T>
struct TransformerLayerParams {
  AttentionParams<T> att;
  TensorT<T> ln1_gamma, ln1_beta;
  TensorT<T> ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  TensorT<T> ln2_gamma, ln2_beta;
};

// Post-norm encoder layer: LN(x + MHA(x)) then LN(y + FFN(y)).
template <typename T>
TensorT<T> transformer_layer(const TensorT<T>& x, const TransformerLayerParams<T>& p,
                             std::size_t heads) {
  auto y = ops::layer_norm(ops::add(x, attention(x, p.att, heads)), p.ln1_gamma, p.ln1_beta);
  auto f = ops::linear(ops::relu(ops::linear(y, p.ffn_w1, p.ffn_b1)), p.ffn_w2, p.ffn_b2);
  return ops::layer_norm(ops::add(y, f), p.ln2_gamma, p.ln2_beta);
}

template <typename T>
struct SeParams {
  TensorT<T> w1, b1, w2, b2;
};

// Squeeze-excitation gate: pool -> C/r bottleneck MLP -> sigmoid channel scale.
template <typename T>
TensorT<T> se_block(const TensorT<T>& x, const SeParams<T>& p) {
  const std::size_t C = x.extent(0);
  auto pooled = ops::reshape(ops::global_avg_pool(x), Shape{1, C});
  auto z = ops::relu(ops::linear(pooled, p.w1, p.b1));
  auto gate = ops::reshape(ops::sigmoid(ops::linear(z, p.w2, p.b2)), Shape{C});
  return ops::channel_scale(x, gate);
}

// Hidden width of the SE bottleneck; asking for more reduction than channels
// is a configuration error.
inline std::size_t se_mid_channels(std::size_t channels, std::size_t reduction) {
  if (reduction == 0 || channels < reduction)
    throw UsageError("se_block: reduction " + std::to_string(reduction) + " exceeds " +
                     std::to_string(channels) + " channels");
  if (channels % reduction)
    throw UsageError("se_block: reduction " + std::to_string(reduction) +
                     " does not divide " + std::to_string(channels) + " channels");
  return channels / reduction;
}

}  // namespace tabs::blocks
