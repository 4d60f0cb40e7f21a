#include "tabs/config.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "tabs/common.hpp"

namespace tabs {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw UsageError("key '" + key + "': expected an integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw UsageError("key '" + key + "': expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw UsageError("key '" + key + "': expected true/false, got '" + v + "'");
}

std::string resolve(const std::string& value, const fs::path& base_dir) {
  if (value.empty()) return value;
  fs::path p(value);
  if (p.is_absolute()) return p.lexically_normal().string();
  return (base_dir / p).lexically_normal().string();
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Applies one TrainConfig key; returns false when the key is not one of ours.
bool apply_train_key(TrainConfig& cfg, const std::string& key, const std::string& value,
                     const fs::path& base_dir) {
  if (key == "variant") cfg.model.variant = value;
  else if (key == "input_size") cfg.model.input_size = static_cast<int>(to_int(key, value));
  else if (key == "features") cfg.model.features = static_cast<int>(to_int(key, value));
  else if (key == "token_dim") cfg.model.token_dim = static_cast<int>(to_int(key, value));
  else if (key == "transformer_layers")
    cfg.model.transformer_layers = static_cast<int>(to_int(key, value));
  else if (key == "transformer_heads")
    cfg.model.transformer_heads = static_cast<int>(to_int(key, value));
  else if (key == "ffn_dim") cfg.model.ffn_dim = static_cast<int>(to_int(key, value));
  else if (key == "groupnorm_groups")
    cfg.model.groupnorm_groups = static_cast<int>(to_int(key, value));
  else if (key == "se_reduction") cfg.model.se_reduction = static_cast<int>(to_int(key, value));
  else if (key == "seed") cfg.model.seed = static_cast<std::uint64_t>(to_int(key, value));
  else if (key == "learning_rate") cfg.learning_rate = to_double(key, value);
  else if (key == "weight_decay") cfg.weight_decay = to_double(key, value);
  else if (key == "batch_size") cfg.batch_size = static_cast<int>(to_int(key, value));
  else if (key == "epochs") cfg.epochs = static_cast<int>(to_int(key, value));
  else if (key == "loss_masking") cfg.loss_masking = to_bool(key, value);
  else if (key == "train_manifest") cfg.train_manifest = resolve(value, base_dir);
  else if (key == "val_manifest") cfg.val_manifest = resolve(value, base_dir);
  else if (key == "test_manifest") cfg.test_manifest = resolve(value, base_dir);
  else if (key == "checkpoint_out") cfg.checkpoint_out = resolve(value, base_dir);
  else if (key == "history_out") cfg.history_out = resolve(value, base_dir);
  else return false;
  return true;
}

}  // namespace

std::map<std::string, std::string> parse_kv_text(const std::string& text,
                                                 const std::string& origin) {
  std::map<std::string, std::string> kv;
  std::size_t pos = 0;
  int lineno = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string line =
        nl == std::string::npos ? text.substr(pos) : text.substr(pos, nl - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(origin + ":" + std::to_string(lineno) + ": expected 'key = value', got '" +
                       line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw UsageError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (kv.count(key))
      throw UsageError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    kv[key] = value;
  }
  return kv;
}

void validate(const TrainConfig& cfg) {
  validate(cfg.model);
  if (cfg.batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (cfg.epochs < 1) throw UsageError("epochs must be >= 1");
  if (!(cfg.learning_rate > 0)) throw UsageError("learning_rate must be > 0");
  if (cfg.weight_decay < 0) throw UsageError("weight_decay must be >= 0");
}

TrainConfig parse_train_config(const std::map<std::string, std::string>& kv,
                               const fs::path& base_dir, const std::string& origin) {
  TrainConfig cfg;
  cfg.model = ModelConfig::desk(kv.count("variant") ? kv.at("variant") : "tabs");
  for (const auto& [key, value] : kv)
    if (!apply_train_key(cfg, key, value, base_dir))
      throw UsageError(origin + ": unknown key '" + key + "'");
  validate(cfg);
  return cfg;
}

TrainConfig load_train_config(const fs::path& path) {
  const auto kv = parse_kv_text(read_file(path), path.string());
  return parse_train_config(kv, path.parent_path(), path.string());
}

std::string serialize_train_config(const TrainConfig& cfg) {
  std::string out;
  auto put = [&](const char* key, const std::string& value) {
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  };
  put("variant", cfg.model.variant);
  put("input_size", std::to_string(cfg.model.input_size));
  put("features", std::to_string(cfg.model.features));
  put("token_dim", std::to_string(cfg.model.token_dim));
  put("transformer_layers", std::to_string(cfg.model.transformer_layers));
  put("transformer_heads", std::to_string(cfg.model.transformer_heads));
  put("ffn_dim", std::to_string(cfg.model.ffn_dim));
  put("groupnorm_groups", std::to_string(cfg.model.groupnorm_groups));
  put("se_reduction", std::to_string(cfg.model.se_reduction));
  put("seed", std::to_string(cfg.model.seed));
  put("learning_rate", fmt_double(cfg.learning_rate));
  put("weight_decay", fmt_double(cfg.weight_decay));
  put("batch_size", std::to_string(cfg.batch_size));
  put("epochs", std::to_string(cfg.epochs));
  put("loss_masking", cfg.loss_masking ? "true" : "false");
  put("train_manifest", cfg.train_manifest);
  put("val_manifest", cfg.val_manifest);
  put("test_manifest", cfg.test_manifest);
  put("checkpoint_out", cfg.checkpoint_out);
  put("history_out", cfg.history_out);
  return out;
}

void validate(const ExperimentPlan& plan) {
  static const std::set<std::string> kinds = {"performance", "generality", "reliability"};
  if (!kinds.count(plan.kind))
    throw UsageError("plan kind '" + plan.kind + "' must be performance|generality|reliability");
  if (plan.variants.empty()) throw UsageError("plan needs at least one variant");
  static const std::set<std::string> known = {"unet", "unet_se", "resunet", "tabs"};
  for (const auto& v : plan.variants)
    if (!known.count(v)) throw UsageError("unknown model variant '" + v + "'");
  if (plan.report_csv.empty() || plan.report_table.empty())
    throw UsageError("plan needs report_csv and report_table paths");
  if (plan.kind == "performance") {
    if (plan.base.train_manifest.empty() || plan.base.val_manifest.empty() ||
        plan.base.test_manifest.empty())
      throw UsageError("performance plan needs train/val/test manifests");
    if (plan.checkpoint_dir.empty())
      throw UsageError("performance plan needs checkpoint_dir for the trained models");
  } else {
    for (const auto& v : plan.variants)
      if (plan_checkpoint_path(plan, v).empty())
        throw UsageError("plan needs checkpoint_" + v + " or checkpoint_dir");
  }
  if (plan.kind == "generality") {
    if (plan.base.test_manifest.empty())
      throw UsageError("generality plan needs test_manifest (target site subjects)");
    if (plan.source_site.empty() || plan.target_site.empty())
      throw UsageError("generality plan needs source_site and target_site");
    if (plan.source_site == plan.target_site)
      throw UsageError("generality requires source_site != target_site");
  }
  if (plan.kind == "reliability" && plan.retest_manifest.empty())
    throw UsageError("reliability plan needs retest_manifest");
}

ExperimentPlan load_plan(const fs::path& path) {
  const auto kv = parse_kv_text(read_file(path), path.string());
  const fs::path base_dir = path.parent_path();
  ExperimentPlan plan;
  plan.base.model = ModelConfig::desk("tabs");
  for (const auto& [key, value] : kv) {
    if (key == "kind") {
      plan.kind = value;
    } else if (key == "variants") {
      std::size_t pos = 0;
      while (pos <= value.size()) {
        const std::size_t comma = value.find(',', pos);
        const std::string item =
            trim(comma == std::string::npos ? value.substr(pos) : value.substr(pos, comma - pos));
        if (!item.empty()) plan.variants.push_back(item);
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
    } else if (key == "checkpoint_dir") {
      plan.checkpoint_dir = resolve(value, base_dir);
    } else if (key.rfind("checkpoint_", 0) == 0 && key != "checkpoint_out") {
      plan.checkpoints[key.substr(11)] = resolve(value, base_dir);
    } else if (key == "retest_manifest") {
      plan.retest_manifest = resolve(value, base_dir);
    } else if (key == "source_site") {
      plan.source_site = value;
    } else if (key == "target_site") {
      plan.target_site = value;
    } else if (key == "report_csv") {
      plan.report_csv = resolve(value, base_dir);
    } else if (key == "report_table") {
      plan.report_table = resolve(value, base_dir);
    } else if (key == "variant") {
      throw UsageError(path.string() + ": plans take 'variants', not 'variant'");
    } else if (!apply_train_key(plan.base, key, value, base_dir)) {
      throw UsageError(path.string() + ": unknown key '" + key + "'");
    }
  }
  validate(plan.base.model);
  validate(plan);
  return plan;
}

std::string plan_checkpoint_path(const ExperimentPlan& plan, const std::string& variant) {
  auto it = plan.checkpoints.find(variant);
  if (it != plan.checkpoints.end()) return it->second;
  if (plan.checkpoint_dir.empty()) return "";
  return (fs::path(plan.checkpoint_dir) / (variant + ".ckpt")).lexically_normal().string();
}

}  // namespace tabs
