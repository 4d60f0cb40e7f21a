#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tabs/model.hpp"

namespace tabs {

// `key = value` lines, '#' comments, blank lines ignored. Duplicate or
// malformed keys raise UsageError.
std::map<std::string, std::string> parse_kv_text(const std::string& text,
                                                 const std::string& origin);

struct TrainConfig {
  ModelConfig model;
  double learning_rate = 1e-5;
  double weight_decay = 1e-6;
  int batch_size = 3;
  int epochs = 200;
  bool loss_masking = true;
  std::string train_manifest, val_manifest, test_manifest;
  std::string checkpoint_out, history_out;
};

void validate(const TrainConfig& cfg);

// Unknown keys are hard errors. Relative paths resolve against base_dir.
TrainConfig parse_train_config(const std::map<std::string, std::string>& kv,
                               const std::filesystem::path& base_dir, const std::string& origin);
TrainConfig load_train_config(const std::filesystem::path& path);

// Canonical text form: fixed key order, exact float round-trip. Embedded in
// checkpoints so a load-save cycle reproduces the file byte for byte.
std::string serialize_train_config(const TrainConfig& cfg);

struct ExperimentPlan {
  std::string kind;  // performance | generality | reliability
  std::vector<std::string> variants;
  TrainConfig base;                              // shared hyperparameters + manifests
  std::map<std::string, std::string> checkpoints;  // variant -> checkpoint path
  std::string checkpoint_dir;                    // fallback: <dir>/<variant>.ckpt
  std::string retest_manifest;                   // reliability input pairs
  std::string source_site, target_site;          // generality bookkeeping
  std::string report_csv, report_table;
};

void validate(const ExperimentPlan& plan);
ExperimentPlan load_plan(const std::filesystem::path& path);

// Checkpoint path for a variant: explicit entry first, else checkpoint_dir.
std::string plan_checkpoint_path(const ExperimentPlan& plan, const std::string& variant);

}  // namespace tabs
