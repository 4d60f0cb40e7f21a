#pragma once

#include <string>
#include <vector>

#include "tabs/metrics.hpp"

namespace tabs {

// One evaluated subject (or retest pair) under one label (model variant or
// baseline arm).
struct SubjectScore {
  std::string label;
  std::string subject;
  MetricsRecord record;
};

// Per-subject CSV: label,subject,tissue,dice,jaccard,hausdorff,pearson,
// spearman,mse,mask_voxels. Missing metrics are empty fields.
std::string report_csv(const std::vector<SubjectScore>& rows);

// mean ± sd per label × tissue × metric, 3 decimals, "--" when no subject
// produced the metric. Labels keep first-appearance order.
std::string report_table(const std::vector<SubjectScore>& rows);

}  // namespace tabs
