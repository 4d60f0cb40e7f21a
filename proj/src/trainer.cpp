#include "tabs/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include "tabs/adam.hpp"
#include "tabs/metrics.hpp"
#include "tabs/ops.hpp"
#include "tabs/preprocess.hpp"

namespace tabs {

namespace {

Tensor volume_to_input(const Volume& scan) {
  const Volume norm = normalize_intensity(scan);
  return Tensor(Shape{1, norm.dx, norm.dy, norm.dz}, norm.values);
}

AdamBlob snapshot_adam(const Model& model, const AdamState& state) {
  AdamBlob blob;
  blob.step = state.step;
  blob.learning_rate = state.learning_rate;
  blob.beta1 = state.beta1;
  blob.beta2 = state.beta2;
  blob.eps = state.eps;
  blob.weight_decay = state.weight_decay;
  for (const auto& [name, tensor] : model.parameters()) {
    auto it = state.slots.find(name);
    CheckpointEntry m, v;
    m.name = name + ".m";
    v.name = name + ".v";
    m.shape = v.shape = tensor.shape();
    if (it != state.slots.end()) {
      m.values = it->second.first;
      v.values = it->second.second;
    } else {
      m.values.assign(tensor.numel(), 0.0f);
      v.values.assign(tensor.numel(), 0.0f);
    }
    blob.slots.push_back(std::move(m));
    blob.slots.push_back(std::move(v));
  }
  return blob;
}

}  // namespace

TrainSample load_sample(const ManifestEntry& entry, int expect_size) {
  const Volume scan = load_volume(entry.scan_path);
  const Volume gt = load_volume(entry.gt_path);
  const auto n = static_cast<std::size_t>(expect_size);
  if (scan.channels != 1 || scan.dx != n || scan.dy != n || scan.dz != n)
    throw DataError(entry.scan_path + ": expected a 1-channel " + std::to_string(expect_size) +
                    "-cube scan");
  if (gt.channels != 3 || gt.dx != n || gt.dy != n || gt.dz != n)
    throw DataError(entry.gt_path + ": expected a 3-channel " + std::to_string(expect_size) +
                    "-cube ground truth");
  TrainSample s;
  s.subject = entry.subject;
  s.input = volume_to_input(scan);
  s.gt = Tensor(Shape{3, n, n, n}, gt.values);
  const Volume mask = brain_mask(gt);
  s.mask = Tensor(Shape{mask.voxels()}, mask.values);
  return s;
}

std::vector<TrainSample> load_samples(const std::vector<ManifestEntry>& entries,
                                      int expect_size) {
  std::vector<TrainSample> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(load_sample(e, expect_size));
  return out;
}

double evaluate_loss(const Model& model, const std::vector<TrainSample>& samples, bool masked) {
  if (samples.empty()) throw UsageError("evaluate_loss on an empty sample set");
  NoGradGuard guard;
  double total = 0.0;
  for (const auto& s : samples) {
    const Tensor pred = model.forward(s.input);
    const Tensor loss = ops::masked_mse(pred, s.gt, masked ? s.mask : Tensor());
    total += static_cast<double>(loss.item());
  }
  return total / double(samples.size());
}

TrainResult train(const TrainConfig& cfg, const EpochCallback& on_epoch) {
  validate(cfg);
  if (cfg.train_manifest.empty() || cfg.val_manifest.empty())
    throw UsageError("training needs train_manifest and val_manifest");
  const auto train_entries = read_manifest(cfg.train_manifest);
  const auto val_entries = read_manifest(cfg.val_manifest);
  auto train_set = load_samples(train_entries, cfg.model.input_size);
  const auto val_set = load_samples(val_entries, cfg.model.input_size);

  Model model(cfg.model);
  AdamState adam;
  adam.learning_rate = cfg.learning_rate;
  adam.weight_decay = cfg.weight_decay;

  TrainResult result;
  result.best_val = std::numeric_limits<double>::infinity();
  const std::size_t n = train_set.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::mt19937_64 rng(mix_seed(cfg.model.seed, 10000 + std::uint64_t(epoch)));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    double epoch_loss = 0.0;
    int batch_index = 0;
    for (std::size_t start = 0; start < n; start += std::size_t(cfg.batch_size), ++batch_index) {
      const std::size_t stop = std::min(n, start + std::size_t(cfg.batch_size));
      const float inv_batch = 1.0f / float(stop - start);
      model.zero_grad();
      for (std::size_t k = start; k < stop; ++k) {
        const TrainSample& s = train_set[order[k]];
        const Tensor pred = model.forward(s.input);
        const Tensor loss = ops::masked_mse(pred, s.gt, cfg.loss_masking ? s.mask : Tensor());
        const double value = static_cast<double>(loss.item());
        if (!std::isfinite(value))
          throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batch_index));
        epoch_loss += value;
        backward(ops::scalar_mul(loss, inv_batch));
      }
      adam_step(model.parameters(), adam);
    }

    EpochStats stats;
    stats.train_loss = epoch_loss / double(n);
    stats.val_loss = evaluate_loss(model, val_set, cfg.loss_masking);
    if (!std::isfinite(stats.val_loss))
      throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    result.history.push_back(stats);
    if (stats.val_loss < result.best_val) {
      result.best_val = stats.val_loss;
      result.best_epoch = epoch;
      result.best.config_text = serialize_train_config(cfg);
      result.best.epoch = static_cast<std::uint32_t>(epoch);
      result.best.best_val = stats.val_loss;
      result.best.params = snapshot_params(model);
      result.best.adam = snapshot_adam(model, adam);
    }
    if (on_epoch) on_epoch(epoch, stats);
  }
  return result;
}

Volume segment_volume(const Model& model, const Volume& scan) {
  const auto n = static_cast<std::size_t>(model.config().input_size);
  if (scan.channels != 1 || scan.dx != n || scan.dy != n || scan.dz != n)
    throw DataError("segment input must be a 1-channel " + std::to_string(n) + "-cube scan");
  NoGradGuard guard;
  const Tensor pred = model.forward(volume_to_input(scan));
  std::map<std::string, std::string> meta = scan.meta;
  meta["provenance"] = "prediction";
  meta["model"] = model.config().variant;
  return from_tensor(pred, Semantics::tissue_probs, std::move(meta));
}

std::string history_csv(const TrainResult& result) {
  std::string out = "epoch,train_loss,val_loss\n";
  char buf[96];
  for (std::size_t i = 0; i < result.history.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", i + 1, result.history[i].train_loss,
                  result.history[i].val_loss);
    out += buf;
  }
  return out;
}

}  // namespace tabs
