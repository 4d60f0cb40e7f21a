#pragma once

#include <array>
#include <optional>
#include <string>

#include "tabs/volume.hpp"

namespace tabs {

inline constexpr int kTissueCount = 3;
const char* tissue_name(int t);  // 0 GM, 1 WM, 2 CSF

struct TissueMetrics {
  std::optional<double> dice, jaccard, hausdorff, pearson, spearman, mse;
};

struct MetricsRecord {
  std::array<TissueMetrics, kTissueCount> tissue;
  std::size_t mask_voxels = 0;
};

// Voxels where the reference's three probabilities sum to > 0.
// Throws DataError when that mask is empty (metrics undefined everywhere).
Volume brain_mask(const Volume& reference);

// Per-voxel winning channel; ties fall to the lowest channel index.
Volume argmax_map(const Volume& prob);

// One binary map per label; the three maps partition the volume.
std::array<Volume, kTissueCount> binary_maps(const Volume& labels);

// Undefined metrics come back empty rather than as a coerced number.
std::optional<double> dice(const Volume& a, const Volume& b);
std::optional<double> jaccard(const Volume& a, const Volume& b);
// Exact max-min Euclidean distance between foreground voxel centers.
std::optional<double> hausdorff(const Volume& a, const Volume& b);

std::optional<double> pearson(const Volume& x, const Volume& y, const Volume& mask);
// Rank correlation with average ranks over ties.
std::optional<double> spearman(const Volume& x, const Volume& y, const Volume& mask);
std::optional<double> mse(const Volume& x, const Volume& y, const Volume& mask);

// Continuous metrics on the probabilities inside brain_mask(ref); discrete
// metrics on per-tissue binary maps from the argmax of each side, restricted
// to the same mask.
MetricsRecord evaluate_pair(const Volume& pred, const Volume& ref);

// Same machinery for a test-retest pair of predictions under a shared mask.
MetricsRecord reliability_pair(const Volume& pred_t1, const Volume& pred_t2, const Volume& mask);

// CSV serialization; missing values are empty fields.
std::string metrics_csv_header();
std::string metrics_csv_rows(const MetricsRecord& record);

}  // namespace tabs
