#include "tabs/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>

namespace tabs {

namespace {

std::string fmt9(const std::optional<double>& v) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", *v);
  return buf;
}

// Sample mean ± sd over the defined values; "--" when none are defined.
std::string aggregate(const std::vector<std::optional<double>>& values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : values)
    if (v) {
      sum += *v;
      ++n;
    }
  if (n == 0) return "--";
  const double mean = sum / double(n);
  double ss = 0.0;
  for (const auto& v : values)
    if (v) ss += (*v - mean) * (*v - mean);
  const double sd = n > 1 ? std::sqrt(ss / double(n - 1)) : 0.0;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f ± %.3f", mean, sd);
  return buf;
}

const char* kMetricNames[6] = {"dice", "jaccard", "hausdorff", "pearson", "spearman", "mse"};

std::optional<double> metric_of(const TissueMetrics& m, int which) {
  switch (which) {
    case 0: return m.dice;
    case 1: return m.jaccard;
    case 2: return m.hausdorff;
    case 3: return m.pearson;
    case 4: return m.spearman;
    default: return m.mse;
  }
}

}  // namespace

std::string report_csv(const std::vector<SubjectScore>& rows) {
  std::string out = "label,subject,tissue,dice,jaccard,hausdorff,pearson,spearman,mse,mask_voxels\n";
  for (const auto& row : rows)
    for (int t = 0; t < kTissueCount; ++t) {
      const TissueMetrics& m = row.record.tissue[t];
      out += row.label + ',' + row.subject + ',' + tissue_name(t) + ',' + fmt9(m.dice) + ',' +
             fmt9(m.jaccard) + ',' + fmt9(m.hausdorff) + ',' + fmt9(m.pearson) + ',' +
             fmt9(m.spearman) + ',' + fmt9(m.mse) + ',' + std::to_string(row.record.mask_voxels) +
             '\n';
    }
  return out;
}

std::string report_table(const std::vector<SubjectScore>& rows) {
  std::vector<std::string> labels;
  for (const auto& row : rows)
    if (std::find(labels.begin(), labels.end(), row.label) == labels.end())
      labels.push_back(row.label);

  // cells[line] = {label, tissue, 6 aggregates}
  std::vector<std::array<std::string, 8>> lines;
  for (const auto& label : labels)
    for (int t = 0; t < kTissueCount; ++t) {
      std::array<std::string, 8> line;
      line[0] = label;
      line[1] = tissue_name(t);
      for (int metric = 0; metric < 6; ++metric) {
        std::vector<std::optional<double>> values;
        for (const auto& row : rows)
          if (row.label == label) values.push_back(metric_of(row.record.tissue[t], metric));
        line[2 + metric] = aggregate(values);
      }
      lines.push_back(std::move(line));
    }

  std::array<std::string, 8> header = {"label",   "tissue",  "dice",     "jaccard",
                                       "hausdorff", "pearson", "spearman", "mse"};
  for (int i = 0; i < 6; ++i) header[2 + i] = kMetricNames[i];
  header[0] = "label";
  header[1] = "tissue";

  // Column widths in display characters; the ± sign is 2 bytes of UTF-8.
  auto width = [](const std::string& s) {
    std::size_t w = 0;
    for (unsigned char c : s)
      if ((c & 0xC0) != 0x80) ++w;
    return w;
  };
  std::array<std::size_t, 8> widths{};
  for (int c = 0; c < 8; ++c) widths[c] = width(header[c]);
  for (const auto& line : lines)
    for (int c = 0; c < 8; ++c) widths[c] = std::max(widths[c], width(line[c]));

  std::string out;
  auto emit = [&](const std::array<std::string, 8>& cells) {
    for (int c = 0; c < 8; ++c) {
      out += cells[c];
      if (c != 7) out.append(widths[c] - width(cells[c]) + 2, ' ');
    }
    out += '\n';
  };
  emit(header);
  for (const auto& line : lines) emit(line);
  return out;
}

}  // namespace tabs
