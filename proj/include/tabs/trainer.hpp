#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tabs/checkpoint.hpp"
#include "tabs/config.hpp"
#include "tabs/dataset.hpp"
#include "tabs/model.hpp"
#include "tabs/volume.hpp"

namespace tabs {

struct TrainSample {
  std::string subject;
  Tensor input;  // [1,N,N,N] normalized scan
  Tensor gt;     // [3,N,N,N] tissue probabilities
  Tensor mask;   // [N³] brain mask (gt support)
};

// Loads scan + gt, normalizes the scan to [-1,1], derives the loss mask.
TrainSample load_sample(const ManifestEntry& entry, int expect_size);
std::vector<TrainSample> load_samples(const std::vector<ManifestEntry>& entries, int expect_size);

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;  // one entry per epoch
  double best_val = 0.0;
  int best_epoch = 0;  // 1-based
  Checkpoint best;     // selected model (lowest validation loss)
};

using EpochCallback = std::function<void(int epoch, const EpochStats&)>;

// Full training protocol: per-epoch seeded shuffle, per-batch Adam step on the
// (optionally masked) MSE loss, best-validation checkpoint selection.
// Throws NumericError with epoch/batch coordinates if the loss goes non-finite.
TrainResult train(const TrainConfig& cfg, const EpochCallback& on_epoch = nullptr);

// Mean (masked) MSE of the model over a sample set; no gradients recorded.
double evaluate_loss(const Model& model, const std::vector<TrainSample>& samples, bool masked);

// Normalize + forward one scan into a 3-channel probability volume.
Volume segment_volume(const Model& model, const Volume& scan);

std::string history_csv(const TrainResult& result);

}  // namespace tabs
