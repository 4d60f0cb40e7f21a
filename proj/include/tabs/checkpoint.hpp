#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tabs/model.hpp"

namespace tabs {

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

// Serialized optimizer moments so a resumed run continues the same trajectory.
struct AdamBlob {
  std::uint64_t step = 0;
  double learning_rate = 1e-5;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double weight_decay = 1e-6;
  std::vector<CheckpointEntry> slots;  // "<param>.m" and "<param>.v"
};

struct Checkpoint {
  std::string config_text;  // canonical training config
  std::uint32_t epoch = 0;  // 1-based epoch of the selected model
  double best_val = 0.0;
  std::vector<CheckpointEntry> params;
  AdamBlob adam;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Snapshot of the model's parameters in registration order.
std::vector<CheckpointEntry> snapshot_params(const Model& model);

// Copies values back into the model; every parameter must appear exactly once
// with a matching shape. Throws DataError otherwise.
void load_into_model(Model& model, const std::vector<CheckpointEntry>& params);

}  // namespace tabs
