#include "tabs/preprocess.hpp"

#include <algorithm>
#include <limits>

#include "tabs/common.hpp"

namespace tabs {

Volume mip_mask(const std::vector<Volume>& volumes, float threshold) {
  if (volumes.empty()) throw UsageError("mip_mask needs at least one volume");
  const Volume& first = volumes.front();
  Volume out(1, first.dx, first.dy, first.dz, Semantics::mask);
  const std::size_t n = out.voxels();
  std::vector<float> mip(n, -std::numeric_limits<float>::infinity());
  for (const Volume& v : volumes) {
    if (v.dx != first.dx || v.dy != first.dy || v.dz != first.dz)
      throw DataError("mip_mask volumes disagree on dimensions");
    for (std::size_t c = 0; c < v.channels; ++c)
      for (std::size_t i = 0; i < n; ++i)
        mip[i] = std::max(mip[i], v.values[c * n + i]);
  }
  for (std::size_t i = 0; i < n; ++i) out.values[i] = mip[i] > threshold ? 1.0f : 0.0f;
  return out;
}

namespace {

struct AxisWindow {
  std::size_t src_lo = 0;   // first source index copied
  std::size_t dst_lo = 0;   // where it lands in the output
  std::size_t count = 0;    // copied run length
};

// One axis of the pad/crop: extents below target get symmetric zero padding,
// extents above get a target-length window centered on the mask bounding box.
AxisWindow plan_axis(std::size_t extent, std::size_t target, std::size_t bbox_lo,
                     std::size_t bbox_hi, bool has_mask, int axis) {
  AxisWindow w;
  if (extent <= target) {
    w.src_lo = 0;
    w.dst_lo = (target - extent) / 2;
    w.count = extent;
    return w;
  }
  if (has_mask && bbox_hi - bbox_lo + 1 > target)
    throw DataError("mask bounding box spans " + std::to_string(bbox_hi - bbox_lo + 1) +
                    " voxels on axis " + std::to_string(axis) + ", larger than target " +
                    std::to_string(target));
  const std::size_t center = has_mask ? (bbox_lo + bbox_hi + 1) / 2 : extent / 2;
  std::size_t start = center > target / 2 ? center - target / 2 : 0;
  start = std::min(start, extent - target);
  if (has_mask && (bbox_lo < start || bbox_hi >= start + target))
    throw DataError("crop window cannot cover the mask on axis " + std::to_string(axis));
  w.src_lo = start;
  w.dst_lo = 0;
  w.count = target;
  return w;
}

}  // namespace

Volume pad_crop(const Volume& v, std::size_t target, const Volume& dataset_mask) {
  if (target == 0) throw UsageError("pad_crop target must be positive");
  if (dataset_mask.dx != v.dx || dataset_mask.dy != v.dy || dataset_mask.dz != v.dz ||
      dataset_mask.channels != 1)
    throw DataError("dataset mask must be a single-channel volume matching the input dimensions");
  std::size_t lo[3] = {v.dx, v.dy, v.dz}, hi[3] = {0, 0, 0};
  bool has_mask = false;
  for (std::size_t x = 0; x < v.dx; ++x)
    for (std::size_t y = 0; y < v.dy; ++y)
      for (std::size_t z = 0; z < v.dz; ++z)
        if (dataset_mask.at(0, x, y, z) > 0) {
          has_mask = true;
          const std::size_t idx[3] = {x, y, z};
          for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], idx[a]);
            hi[a] = std::max(hi[a], idx[a]);
          }
        }
  const std::size_t extents[3] = {v.dx, v.dy, v.dz};
  AxisWindow w[3];
  for (int a = 0; a < 3; ++a)
    w[a] = plan_axis(extents[a], target, lo[a], hi[a], has_mask, a);
  Volume out(v.channels, target, target, target, v.semantics);
  out.meta = v.meta;
  for (std::size_t c = 0; c < v.channels; ++c)
    for (std::size_t x = 0; x < w[0].count; ++x)
      for (std::size_t y = 0; y < w[1].count; ++y) {
        const float* src =
            v.values.data() +
            (((c * v.dx + w[0].src_lo + x) * v.dy + w[1].src_lo + y) * v.dz + w[2].src_lo);
        float* dst = &out.at(c, w[0].dst_lo + x, w[1].dst_lo + y, w[2].dst_lo);
        std::copy(src, src + w[2].count, dst);
      }
  return out;
}

Volume normalize_intensity(const Volume& v) {
  if (v.values.empty()) throw DataError("cannot normalize an empty volume");
  float lo = v.values[0], hi = v.values[0];
  for (float x : v.values) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (!(hi > lo)) throw DataError("cannot normalize a constant volume");
  Volume out = v;
  if (lo == -1.0f && hi == 1.0f) return out;  // already spans [-1,1]; keep bits
  const float scale = 2.0f / (hi - lo);
  for (float& x : out.values) x = (x - lo) * scale - 1.0f;
  return out;
}

}  // namespace tabs
