#include "tabs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <vector>

#include "tabs/common.hpp"

namespace tabs {

namespace {

constexpr double kInf = 1e30;

void check_probs3(const Volume& v, const char* what) {
  if (v.channels != 3)
    throw DataError(std::string(what) + " must have 3 channels, has " +
                    std::to_string(v.channels));
}

void check_same_dims(const Volume& a, const Volume& b, const char* what) {
  if (a.dx != b.dx || a.dy != b.dy || a.dz != b.dz)
    throw DataError(std::string(what) + ": volumes disagree on dimensions");
}

// 1D squared distance transform; lower envelope of parabolas rooted at f.
void dt1d(std::vector<double>& f, std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  static thread_local std::vector<double> d;
  d.assign(n, 0.0);
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    double s;
    while (true) {
      const int p = v[k];
      s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * q - 2.0 * p);
      if (s > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - double(v[k]);
    d[q] = dq * dq + f[v[k]];
  }
  std::copy(d.begin(), d.end(), f.begin());
}

// Exact squared Euclidean distance to the nearest foreground voxel center.
std::vector<double> squared_edt(const Volume& m) {
  const std::size_t dx = m.dx, dy = m.dy, dz = m.dz;
  std::vector<double> dist(dx * dy * dz);
  for (std::size_t i = 0; i < dist.size(); ++i) dist[i] = m.values[i] > 0 ? 0.0 : kInf;
  const std::size_t dim = std::max({dx, dy, dz});
  std::vector<double> f(dim), z(dim + 1);
  std::vector<int> v(dim);
  auto idx = [&](std::size_t x, std::size_t y, std::size_t zz) { return (x * dy + y) * dz + zz; };
  for (std::size_t x = 0; x < dx; ++x)
    for (std::size_t y = 0; y < dy; ++y) {
      f.assign(dist.begin() + idx(x, y, 0), dist.begin() + idx(x, y, 0) + dz);
      dt1d(f, v, z);
      std::copy(f.begin(), f.begin() + dz, dist.begin() + idx(x, y, 0));
    }
  for (std::size_t x = 0; x < dx; ++x)
    for (std::size_t zz = 0; zz < dz; ++zz) {
      f.resize(dy);
      for (std::size_t y = 0; y < dy; ++y) f[y] = dist[idx(x, y, zz)];
      dt1d(f, v, z);
      for (std::size_t y = 0; y < dy; ++y) dist[idx(x, y, zz)] = f[y];
    }
  for (std::size_t y = 0; y < dy; ++y)
    for (std::size_t zz = 0; zz < dz; ++zz) {
      f.resize(dx);
      for (std::size_t x = 0; x < dx; ++x) f[x] = dist[idx(x, y, zz)];
      dt1d(f, v, z);
      for (std::size_t x = 0; x < dx; ++x) dist[idx(x, y, zz)] = f[x];
    }
  return dist;
}

std::size_t count_fg(const Volume& v) {
  std::size_t n = 0;
  for (float x : v.values)
    if (x > 0) ++n;
  return n;
}

std::size_t count_inter(const Volume& a, const Volume& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i)
    if (a.values[i] > 0 && b.values[i] > 0) ++n;
  return n;
}

// Masked voxel values of one channel, promoted to double.
std::vector<double> masked_values(const Volume& v, std::size_t channel, const Volume& mask) {
  std::vector<double> out;
  const std::size_t n = v.voxels();
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (mask.values[i] > 0) out.push_back(v.values[channel * n + i]);
  return out;
}

std::optional<double> pearson_vec(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n == 0) return std::nullopt;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= double(n);
  my /= double(n);
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = x[i] - mx, b = y[i] - my;
    sxx += a * a;
    syy += b * b;
    sxy += a * b;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;  // constant vector
  return sxy / std::sqrt(sxx * syy);
}

std::vector<double> average_ranks(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = (double(i) + double(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

std::string fmt_opt(const std::optional<double>& v) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", *v);
  return buf;
}

// Shared core of evaluate_pair / reliability_pair once the mask is fixed.
MetricsRecord scored_pair(const Volume& a, const Volume& b, const Volume& mask) {
  MetricsRecord rec;
  rec.mask_voxels = count_fg(mask);
  if (rec.mask_voxels == 0) throw DataError("evaluation mask is empty");
  const std::size_t n = a.voxels();
  const Volume la = argmax_map(a), lb = argmax_map(b);
  auto maps_a = binary_maps(la), maps_b = binary_maps(lb);
  for (int t = 0; t < kTissueCount; ++t) {
    for (std::size_t i = 0; i < n; ++i)
      if (!(mask.values[i] > 0)) {
        maps_a[t].values[i] = 0;
        maps_b[t].values[i] = 0;
      }
    TissueMetrics& m = rec.tissue[t];
    m.dice = dice(maps_a[t], maps_b[t]);
    m.jaccard = jaccard(maps_a[t], maps_b[t]);
    m.hausdorff = hausdorff(maps_a[t], maps_b[t]);
    const auto xs = masked_values(a, t, mask), ys = masked_values(b, t, mask);
    m.pearson = pearson_vec(xs, ys);
    m.spearman = pearson_vec(average_ranks(xs), average_ranks(ys));
    double acc = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) acc += (xs[i] - ys[i]) * (xs[i] - ys[i]);
    m.mse = acc / double(xs.size());
  }
  return rec;
}

}  // namespace

const char* tissue_name(int t) {
  switch (t) {
    case 0: return "GM";
    case 1: return "WM";
    case 2: return "CSF";
  }
  throw UsageError("tissue index out of range");
}

Volume brain_mask(const Volume& reference) {
  check_probs3(reference, "brain_mask reference");
  Volume mask(1, reference.dx, reference.dy, reference.dz, Semantics::mask);
  const std::size_t n = mask.voxels();
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const float s =
        reference.values[i] + reference.values[n + i] + reference.values[2 * n + i];
    if (s > 0) {
      mask.values[i] = 1.0f;
      ++count;
    }
  }
  if (count == 0) throw DataError("reference volume is all zero; mask is empty");
  return mask;
}

Volume argmax_map(const Volume& prob) {
  check_probs3(prob, "argmax_map input");
  Volume labels(1, prob.dx, prob.dy, prob.dz, Semantics::labels);
  const std::size_t n = labels.voxels();
  for (std::size_t i = 0; i < n; ++i) {
    int best = 0;
    float best_v = prob.values[i];
    for (int c = 1; c < 3; ++c)
      if (prob.values[c * n + i] > best_v) {  // strict: ties keep the lowest
        best_v = prob.values[c * n + i];
        best = c;
      }
    labels.values[i] = static_cast<float>(best);
  }
  return labels;
}

std::array<Volume, kTissueCount> binary_maps(const Volume& labels) {
  if (labels.channels != 1) throw DataError("binary_maps expects a single-channel label volume");
  std::array<Volume, kTissueCount> maps{
      Volume(1, labels.dx, labels.dy, labels.dz, Semantics::mask),
      Volume(1, labels.dx, labels.dy, labels.dz, Semantics::mask),
      Volume(1, labels.dx, labels.dy, labels.dz, Semantics::mask)};
  for (std::size_t i = 0; i < labels.values.size(); ++i) {
    const int label = static_cast<int>(labels.values[i]);
    if (label < 0 || label >= kTissueCount)
      throw DataError("label value " + std::to_string(labels.values[i]) + " out of range");
    maps[label].values[i] = 1.0f;
  }
  return maps;
}

std::optional<double> dice(const Volume& a, const Volume& b) {
  check_same_dims(a, b, "dice");
  const std::size_t ca = count_fg(a), cb = count_fg(b);
  if (ca + cb == 0) return std::nullopt;
  return 2.0 * double(count_inter(a, b)) / double(ca + cb);
}

std::optional<double> jaccard(const Volume& a, const Volume& b) {
  check_same_dims(a, b, "jaccard");
  const std::size_t inter = count_inter(a, b);
  const std::size_t uni = count_fg(a) + count_fg(b) - inter;
  if (uni == 0) return std::nullopt;
  return double(inter) / double(uni);
}

std::optional<double> hausdorff(const Volume& a, const Volume& b) {
  check_same_dims(a, b, "hausdorff");
  if (count_fg(a) == 0 || count_fg(b) == 0) return std::nullopt;
  const auto da = squared_edt(a), db = squared_edt(b);
  double worst = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    if (a.values[i] > 0) worst = std::max(worst, db[i]);
    if (b.values[i] > 0) worst = std::max(worst, da[i]);
  }
  return std::sqrt(worst);
}

std::optional<double> pearson(const Volume& x, const Volume& y, const Volume& mask) {
  check_same_dims(x, y, "pearson");
  check_same_dims(x, mask, "pearson");
  return pearson_vec(masked_values(x, 0, mask), masked_values(y, 0, mask));
}

std::optional<double> spearman(const Volume& x, const Volume& y, const Volume& mask) {
  check_same_dims(x, y, "spearman");
  check_same_dims(x, mask, "spearman");
  const auto xs = masked_values(x, 0, mask), ys = masked_values(y, 0, mask);
  return pearson_vec(average_ranks(xs), average_ranks(ys));
}

std::optional<double> mse(const Volume& x, const Volume& y, const Volume& mask) {
  check_same_dims(x, y, "mse");
  check_same_dims(x, mask, "mse");
  const auto xs = masked_values(x, 0, mask), ys = masked_values(y, 0, mask);
  if (xs.empty()) return std::nullopt;
  double acc = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) acc += (xs[i] - ys[i]) * (xs[i] - ys[i]);
  return acc / double(xs.size());
}

MetricsRecord evaluate_pair(const Volume& pred, const Volume& ref) {
  check_probs3(pred, "prediction");
  check_probs3(ref, "reference");
  check_same_dims(pred, ref, "evaluate_pair");
  return scored_pair(pred, ref, brain_mask(ref));
}

MetricsRecord reliability_pair(const Volume& pred_t1, const Volume& pred_t2, const Volume& mask) {
  check_probs3(pred_t1, "prediction (timepoint 1)");
  check_probs3(pred_t2, "prediction (timepoint 2)");
  check_same_dims(pred_t1, pred_t2, "reliability_pair");
  check_same_dims(pred_t1, mask, "reliability_pair");
  if (mask.channels != 1) throw DataError("reliability mask must be single-channel");
  return scored_pair(pred_t1, pred_t2, mask);
}

std::string metrics_csv_header() {
  return "tissue,dice,jaccard,hausdorff,pearson,spearman,mse,mask_voxels";
}

std::string metrics_csv_rows(const MetricsRecord& record) {
  std::string out;
  for (int t = 0; t < kTissueCount; ++t) {
    const TissueMetrics& m = record.tissue[t];
    out += tissue_name(t);
    out += ',';
    out += fmt_opt(m.dice) + ',' + fmt_opt(m.jaccard) + ',' + fmt_opt(m.hausdorff) + ',' +
           fmt_opt(m.pearson) + ',' + fmt_opt(m.spearman) + ',' + fmt_opt(m.mse) + ',';
    out += std::to_string(record.mask_voxels);
    out += '\n';
  }
  return out;
}

}  // namespace tabs
