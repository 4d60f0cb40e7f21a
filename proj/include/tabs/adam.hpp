#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tabs/kernels.hpp"
#include "tabs/tensor.hpp"

namespace tabs {

// Adam with bias correction; weight decay enters as coupled L2 on the
// gradient. Moment buffers are keyed by parameter name so they can be
// serialized alongside the parameters.
template <typename T>
struct AdamStateT {
  double learning_rate = 1e-5;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double weight_decay = 1e-6;
  std::uint64_t step = 0;
  std::unordered_map<std::string, std::pair<std::vector<T>, std::vector<T>>> slots;
};

using AdamState = AdamStateT<float>;

template <typename T>
void adam_step(std::vector<std::pair<std::string, TensorT<T>>>& params, AdamStateT<T>& state) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
  const T lr = T(state.learning_rate), wd = T(state.weight_decay);
  const T b1 = T(state.beta1), b2 = T(state.beta2), eps = T(state.eps);
  const T ibc1 = T(1.0 / bc1), ibc2 = T(1.0 / bc2);
  for (auto& [name, tensor] : params) {
    if (!tensor.requires_grad() || !tensor.has_grad()) continue;
    auto& [m, v] = state.slots[name];
    if (m.size() != tensor.numel()) {
      m.assign(tensor.numel(), T(0));
      v.assign(tensor.numel(), T(0));
    }
    auto value = tensor.raw_data();
    auto grad = tensor.grad();
    T* mp = m.data();
    T* vp = v.data();
    kernels::parallel_for(tensor.numel(), [&](std::size_t i) {
      const T g = grad[i] + wd * value[i];
      mp[i] = b1 * mp[i] + (T(1) - b1) * g;
      vp[i] = b2 * vp[i] + (T(1) - b2) * g * g;
      value[i] -= lr * (mp[i] * ibc1) / (std::sqrt(vp[i] * ibc2) + eps);
    });
  }
}

}  // namespace tabs
