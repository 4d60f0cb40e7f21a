#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tabs/tensor.hpp"

namespace tabs {

// Architecture hyperparameters for the four variants. The channel schedule is
// [f/16, f/8, f/4, f/2, f] over five levels with four stride-2 downsamples,
// so the bottleneck spatial edge is input_size/16.
struct ModelConfig {
  std::string variant = "tabs";  // unet | unet_se | resunet | tabs
  int input_size = 32;
  int in_channels = 1;
  int out_channels = 3;
  int features = 16;  // f, bottleneck channels
  int depth = 5;
  int downsamples = 4;
  int token_dim = 32;          // d
  int transformer_layers = 2;  // L
  int transformer_heads = 4;   // h
  int ffn_dim = 128;
  int groupnorm_groups = 8;
  int se_reduction = 4;
  std::uint64_t seed = 7;

  static ModelConfig desk(const std::string& variant = "tabs");
  static ModelConfig paper(const std::string& variant = "tabs");
};

// Throws UsageError when invariants are violated (divisibility, positivity).
void validate(const ModelConfig& cfg);

struct ParamSpec {
  enum class Init { conv, convt, linear, zero, one, pos_embedding, head };
  std::string name;
  Shape shape;
  Init init;
};

// Full parameter manifest in registration order (backbone first, Transformer
// bottleneck last), derived from the config without allocating anything.
std::vector<ParamSpec> param_shapes(const ModelConfig& cfg);

std::int64_t count_parameters(const ModelConfig& cfg);

// Named stages of the forward pass with their shapes, computed symbolically.
using StageTrace = std::vector<std::pair<std::string, Shape>>;
StageTrace infer_shapes(const ModelConfig& cfg);

class Model {
 public:
  Model() = default;
  // bypass_transformer skips the tokenize/Transformer/detokenize insert of the
  // tabs variant, reducing its graph to the plain resunet backbone.
  explicit Model(ModelConfig cfg, bool bypass_transformer = false);

  const ModelConfig& config() const { return cfg_; }
  bool bypassed() const { return bypass_; }

  std::vector<std::pair<std::string, Tensor>>& parameters() { return params_; }
  const std::vector<std::pair<std::string, Tensor>>& parameters() const { return params_; }
  Tensor& param(const std::string& name);
  const Tensor& param(const std::string& name) const;

  Tensor forward(const Tensor& x, StageTrace* trace = nullptr) const;
  void zero_grad();

 private:
  ModelConfig cfg_;
  bool bypass_ = false;
  std::vector<std::pair<std::string, Tensor>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace tabs
