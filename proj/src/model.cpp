#include "tabs/model.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "tabs/blocks.hpp"
#include "tabs/ops.hpp"

namespace tabs {

namespace {

constexpr int kLevels = 5;

bool known_variant(const std::string& v) {
  return v == "unet" || v == "unet_se" || v == "resunet" || v == "tabs";
}

bool residual_variant(const std::string& v) { return v == "resunet" || v == "tabs"; }

// Channels at levels 1..5.
std::vector<int> channel_schedule(const ModelConfig& cfg) {
  return {cfg.features / 16, cfg.features / 8, cfg.features / 4, cfg.features / 2, cfg.features};
}

int norm_groups(const ModelConfig& cfg, int channels) {
  return std::gcd(cfg.groupnorm_groups, channels);
}

int se_mid(const ModelConfig& cfg, int channels) {
  return channels / std::gcd(cfg.se_reduction, channels);
}

std::string lvl_name(const char* base, int lvl) { return base + std::to_string(lvl); }

}  // namespace

ModelConfig ModelConfig::desk(const std::string& variant) {
  ModelConfig cfg;
  cfg.variant = variant;
  return cfg;
}

ModelConfig ModelConfig::paper(const std::string& variant) {
  ModelConfig cfg;
  cfg.variant = variant;
  cfg.input_size = 192;
  cfg.features = 128;
  cfg.token_dim = 512;
  cfg.transformer_layers = 4;
  cfg.transformer_heads = 8;
  cfg.ffn_dim = 2048;
  cfg.groupnorm_groups = 8;
  cfg.se_reduction = 16;
  return cfg;
}

void validate(const ModelConfig& cfg) {
  if (!known_variant(cfg.variant))
    throw UsageError("unknown model variant '" + cfg.variant + "'");
  if (cfg.depth != kLevels || cfg.downsamples != kLevels - 1)
    throw UsageError("backbone is fixed at 5 levels with 4 downsamples");
  if (cfg.in_channels != 1 || cfg.out_channels != 3)
    throw UsageError("model expects 1 input channel and 3 output channels");
  if (cfg.input_size <= 0 || cfg.input_size % 16)
    throw UsageError("input_size " + std::to_string(cfg.input_size) +
                     " not divisible by 16 (four stride-2 stages)");
  if (cfg.features <= 0 || cfg.features % 16)
    throw UsageError("features " + std::to_string(cfg.features) + " not divisible by 16");
  if (cfg.groupnorm_groups <= 0 || cfg.features % cfg.groupnorm_groups)
    throw UsageError("groupnorm_groups " + std::to_string(cfg.groupnorm_groups) +
                     " does not divide features " + std::to_string(cfg.features));
  if (cfg.token_dim <= 0 || cfg.transformer_heads <= 0 ||
      cfg.token_dim % cfg.transformer_heads)
    throw UsageError("token_dim " + std::to_string(cfg.token_dim) + " not divisible by " +
                     std::to_string(cfg.transformer_heads) + " heads");
  if (cfg.transformer_layers <= 0) throw UsageError("transformer_layers must be >= 1");
  if (cfg.ffn_dim <= 0) throw UsageError("ffn_dim must be >= 1");
  if (cfg.se_reduction <= 0) throw UsageError("se_reduction must be >= 1");
}

std::vector<ParamSpec> param_shapes(const ModelConfig& cfg) {
  validate(cfg);
  using Init = ParamSpec::Init;
  std::vector<ParamSpec> specs;
  const auto ch = channel_schedule(cfg);
  const bool residual = residual_variant(cfg.variant);
  const auto su = [](int v) { return static_cast<std::size_t>(v); };

  auto block = [&](const std::string& prefix, int cin, int cout) {
    specs.push_back({prefix + ".conv1.weight", {su(cout), su(cin), 3, 3, 3}, Init::conv});
    specs.push_back({prefix + ".conv1.bias", {su(cout)}, Init::zero});
    specs.push_back({prefix + ".gn1.gamma", {su(cout)}, Init::one});
    specs.push_back({prefix + ".gn1.beta", {su(cout)}, Init::zero});
    specs.push_back({prefix + ".conv2.weight", {su(cout), su(cout), 3, 3, 3}, Init::conv});
    specs.push_back({prefix + ".conv2.bias", {su(cout)}, Init::zero});
    specs.push_back({prefix + ".gn2.gamma", {su(cout)}, Init::one});
    specs.push_back({prefix + ".gn2.beta", {su(cout)}, Init::zero});
    if (residual && cin != cout) {
      specs.push_back({prefix + ".proj.weight", {su(cout), su(cin), 1, 1, 1}, Init::conv});
      specs.push_back({prefix + ".proj.bias", {su(cout)}, Init::zero});
    }
  };

  for (int lvl = 1; lvl <= kLevels; ++lvl) {
    const int cin = lvl == 1 ? cfg.in_channels : ch[lvl - 1];
    block(lvl_name("enc", lvl), cin, ch[lvl - 1]);
    if (lvl < kLevels) {
      if (cfg.variant == "unet_se") {
        const int C = ch[lvl - 1];
        const int mid = se_mid(cfg, C);
        const auto se = lvl_name("se", lvl);
        specs.push_back({se + ".fc1.weight", {su(C), su(mid)}, Init::linear});
        specs.push_back({se + ".fc1.bias", {su(mid)}, Init::zero});
        specs.push_back({se + ".fc2.weight", {su(mid), su(C)}, Init::linear});
        specs.push_back({se + ".fc2.bias", {su(C)}, Init::zero});
      }
      const auto dn = lvl_name("down", lvl);
      specs.push_back({dn + ".weight", {su(ch[lvl]), su(ch[lvl - 1]), 3, 3, 3}, Init::conv});
      specs.push_back({dn + ".bias", {su(ch[lvl])}, Init::zero});
    }
  }

  for (int lvl = kLevels - 1; lvl >= 1; --lvl) {
    const auto up = lvl_name("up", lvl);
    specs.push_back({up + ".weight", {su(ch[lvl]), su(ch[lvl - 1]), 2, 2, 2}, Init::convt});
    specs.push_back({up + ".bias", {su(ch[lvl - 1])}, Init::zero});
    block(lvl_name("dec", lvl), 2 * ch[lvl - 1], ch[lvl - 1]);
  }

  // Small-scale head init keeps the untrained output near-uniform; fan-in
  // scaling would saturate the softmax through the 1x1x1 classifier.
  specs.push_back({"head.weight", {su(cfg.out_channels), su(ch[0]), 1, 1, 1}, Init::head});
  specs.push_back({"head.bias", {su(cfg.out_channels)}, Init::zero});

  if (cfg.variant == "tabs") {
    const int s = cfg.input_size / 16;
    const std::size_t n = su(s) * su(s) * su(s);
    const std::size_t d = su(cfg.token_dim);
    const std::size_t f = su(cfg.features);
    specs.push_back({"tok.proj.weight", {d, f, 1, 1, 1}, Init::conv});
    specs.push_back({"tok.proj.bias", {d}, Init::zero});
    specs.push_back({"tok.pos", {n, d}, Init::pos_embedding});
    for (int l = 0; l < cfg.transformer_layers; ++l) {
      const std::string tr = lvl_name("tr", l);
      for (const char* proj : {"wq", "wk", "wv", "wo"}) {
        specs.push_back({tr + "." + proj + ".weight", {d, d}, Init::linear});
        specs.push_back({tr + "." + proj + ".bias", {d}, Init::zero});
      }
      specs.push_back({tr + ".ln1.gamma", {d}, Init::one});
      specs.push_back({tr + ".ln1.beta", {d}, Init::zero});
      specs.push_back({tr + ".ffn.w1.weight", {d, su(cfg.ffn_dim)}, Init::linear});
      specs.push_back({tr + ".ffn.w1.bias", {su(cfg.ffn_dim)}, Init::zero});
      specs.push_back({tr + ".ffn.w2.weight", {su(cfg.ffn_dim), d}, Init::linear});
      specs.push_back({tr + ".ffn.w2.bias", {d}, Init::zero});
      specs.push_back({tr + ".ln2.gamma", {d}, Init::one});
      specs.push_back({tr + ".ln2.beta", {d}, Init::zero});
    }
    specs.push_back({"detok.weight", {f, d, 3, 3, 3}, Init::conv});
    specs.push_back({"detok.bias", {f}, Init::zero});
  }
  return specs;
}

std::int64_t count_parameters(const ModelConfig& cfg) {
  std::int64_t total = 0;
  for (const auto& spec : param_shapes(cfg)) total += static_cast<std::int64_t>(shape_numel(spec.shape));
  return total;
}

StageTrace infer_shapes(const ModelConfig& cfg) {
  validate(cfg);
  StageTrace trace;
  const auto ch = channel_schedule(cfg);
  const auto su = [](int v) { return static_cast<std::size_t>(v); };
  std::size_t edge = su(cfg.input_size);
  trace.emplace_back("input", Shape{su(cfg.in_channels), edge, edge, edge});
  for (int lvl = 1; lvl <= kLevels; ++lvl) {
    trace.emplace_back(lvl_name("enc", lvl), Shape{su(ch[lvl - 1]), edge, edge, edge});
    if (lvl < kLevels) {
      edge /= 2;
      trace.emplace_back(lvl_name("down", lvl), Shape{su(ch[lvl]), edge, edge, edge});
    }
  }
  trace.emplace_back("encoder_out", Shape{su(cfg.features), edge, edge, edge});
  if (cfg.variant == "tabs") {
    const std::size_t n = edge * edge * edge;
    trace.emplace_back("tokens", Shape{n, su(cfg.token_dim)});
    trace.emplace_back("transformer_out", Shape{n, su(cfg.token_dim)});
    trace.emplace_back("detok", Shape{su(cfg.features), edge, edge, edge});
  }
  for (int lvl = kLevels - 1; lvl >= 1; --lvl) {
    edge *= 2;
    trace.emplace_back(lvl_name("up", lvl), Shape{su(ch[lvl - 1]), edge, edge, edge});
    trace.emplace_back(lvl_name("dec", lvl), Shape{su(ch[lvl - 1]), edge, edge, edge});
  }
  trace.emplace_back("decoder_out", Shape{su(cfg.out_channels), edge, edge, edge});
  return trace;
}

Model::Model(ModelConfig cfg, bool bypass_transformer)
    : cfg_(std::move(cfg)), bypass_(bypass_transformer) {
  validate(cfg_);
  if (bypass_ && cfg_.variant != "tabs")
    throw UsageError("bypass_transformer only applies to the tabs variant");
  std::mt19937 rng(static_cast<std::uint32_t>(cfg_.seed));
  for (const auto& spec : param_shapes(cfg_)) {
    Tensor t(spec.shape);
    auto vals = t.raw_data();
    switch (spec.init) {
      case ParamSpec::Init::conv:
      case ParamSpec::Init::convt:
      case ParamSpec::Init::linear: {
        std::size_t fan_in = 0;
        if (spec.init == ParamSpec::Init::linear) {
          fan_in = spec.shape[0];
        } else {
          const std::size_t k3 = spec.shape[2] * spec.shape[3] * spec.shape[4];
          fan_in = (spec.init == ParamSpec::Init::conv ? spec.shape[1] : spec.shape[0]) * k3;
        }
        const float limit = std::sqrt(6.0f / static_cast<float>(fan_in));
        std::uniform_real_distribution<float> dist(-limit, limit);
        for (auto& v : vals) v = dist(rng);
        break;
      }
      case ParamSpec::Init::zero:
        break;
      case ParamSpec::Init::one:
        for (auto& v : vals) v = 1.0f;
        break;
      case ParamSpec::Init::pos_embedding: {
        std::normal_distribution<float> dist(0.0f, 0.02f);
        for (auto& v : vals) v = dist(rng);
        break;
      }
      case ParamSpec::Init::head: {
        std::normal_distribution<float> dist(0.0f, 0.01f);
        for (auto& v : vals) v = dist(rng);
        break;
      }
    }
    t.set_requires_grad(true);
    index_[spec.name] = params_.size();
    params_.emplace_back(spec.name, std::move(t));
  }
}

Tensor& Model::param(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw UsageError("no parameter named '" + name + "'");
  return params_[it->second].second;
}

const Tensor& Model::param(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw UsageError("no parameter named '" + name + "'");
  return params_[it->second].second;
}

void Model::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

Tensor Model::forward(const Tensor& x, StageTrace* trace) const {
  const auto su = [](int v) { return static_cast<std::size_t>(v); };
  const Shape expect{su(cfg_.in_channels), su(cfg_.input_size), su(cfg_.input_size),
                     su(cfg_.input_size)};
  if (!x.defined() || x.shape() != expect)
    throw UsageError("forward expects input " + shape_str(expect) + ", got " +
                     (x.defined() ? shape_str(x.shape()) : std::string("undefined")));

  const auto ch = channel_schedule(cfg_);
  const bool residual = residual_variant(cfg_.variant);
  auto rec = [&](const std::string& name, const Tensor& t) {
    if (trace) trace->emplace_back(name, t.shape());
  };

  auto block = [&](const Tensor& in, const std::string& prefix, int cout) {
    const int g = norm_groups(cfg_, cout);
    auto h = ops::relu(ops::group_norm(
        ops::conv3d(in, param(prefix + ".conv1.weight"), param(prefix + ".conv1.bias"), 1, 1),
        param(prefix + ".gn1.gamma"), param(prefix + ".gn1.beta"), su(g)));
    h = ops::group_norm(
        ops::conv3d(h, param(prefix + ".conv2.weight"), param(prefix + ".conv2.bias"), 1, 1),
        param(prefix + ".gn2.gamma"), param(prefix + ".gn2.beta"), su(g));
    if (!residual) return ops::relu(h);
    Tensor shortcut = in;
    if (in.extent(0) != su(cout))
      shortcut =
          ops::conv3d(in, param(prefix + ".proj.weight"), param(prefix + ".proj.bias"), 1, 0);
    return ops::relu(ops::add(h, shortcut));
  };

  rec("input", x);
  Tensor cur = x;
  std::vector<Tensor> skips;
  for (int lvl = 1; lvl <= kLevels; ++lvl) {
    cur = block(cur, lvl_name("enc", lvl), ch[lvl - 1]);
    rec(lvl_name("enc", lvl), cur);
    if (lvl < kLevels) {
      if (cfg_.variant == "unet_se") {
        const auto se = lvl_name("se", lvl);
        blocks::SeParams<float> p{param(se + ".fc1.weight"), param(se + ".fc1.bias"),
                                  param(se + ".fc2.weight"), param(se + ".fc2.bias")};
        cur = blocks::se_block(cur, p);
      }
      skips.push_back(cur);
      const auto dn = lvl_name("down", lvl);
      cur = ops::conv3d(cur, param(dn + ".weight"), param(dn + ".bias"), 2, 1);
      rec(dn, cur);
    }
  }
  rec("encoder_out", cur);

  if (cfg_.variant == "tabs" && !bypass_) {
    const std::size_t s = su(cfg_.input_size / 16);
    const std::size_t n = s * s * s;
    const std::size_t d = su(cfg_.token_dim);
    auto projected = ops::conv3d(cur, param("tok.proj.weight"), param("tok.proj.bias"), 1, 0);
    auto tokens = ops::add(ops::transpose2d(ops::reshape(projected, Shape{d, n})), param("tok.pos"));
    rec("tokens", tokens);
    for (int l = 0; l < cfg_.transformer_layers; ++l) {
      const std::string tr = lvl_name("tr", l);
      blocks::TransformerLayerParams<float> p{
          {param(tr + ".wq.weight"), param(tr + ".wq.bias"), param(tr + ".wk.weight"),
           param(tr + ".wk.bias"), param(tr + ".wv.weight"), param(tr + ".wv.bias"),
           param(tr + ".wo.weight"), param(tr + ".wo.bias")},
          param(tr + ".ln1.gamma"),
          param(tr + ".ln1.beta"),
          param(tr + ".ffn.w1.weight"),
          param(tr + ".ffn.w1.bias"),
          param(tr + ".ffn.w2.weight"),
          param(tr + ".ffn.w2.bias"),
          param(tr + ".ln2.gamma"),
          param(tr + ".ln2.beta")};
      tokens = blocks::transformer_layer(tokens, p, su(cfg_.transformer_heads));
    }
    rec("transformer_out", tokens);
    auto volume = ops::reshape(ops::transpose2d(tokens), Shape{d, s, s, s});
    cur = ops::conv3d(volume, param("detok.weight"), param("detok.bias"), 1, 1);
    rec("detok", cur);
  } else if (cfg_.variant == "tabs" && trace) {
    // Keep the trace aligned with infer_shapes even when the insert is bypassed.
    const std::size_t s = su(cfg_.input_size / 16);
    const std::size_t n = s * s * s;
    trace->emplace_back("tokens", Shape{n, su(cfg_.token_dim)});
    trace->emplace_back("transformer_out", Shape{n, su(cfg_.token_dim)});
    trace->emplace_back("detok", Shape{su(cfg_.features), s, s, s});
  }

  for (int lvl = kLevels - 1; lvl >= 1; --lvl) {
    const auto up = lvl_name("up", lvl);
    cur = ops::conv_transpose3d(cur, param(up + ".weight"), param(up + ".bias"), 2);
    rec(up, cur);
    cur = block(ops::concat_channels(cur, skips[lvl - 1]), lvl_name("dec", lvl), ch[lvl - 1]);
    rec(lvl_name("dec", lvl), cur);
  }

  auto out = ops::softmax(ops::conv3d(cur, param("head.weight"), param("head.bias"), 1, 0), 0);
  rec("decoder_out", out);
  return out;
}

}  // namespace tabs
