#pragma once

#include <vector>

#include "tabs/volume.hpp"

namespace tabs {

// Voxelwise maximum-intensity projection over all channels of all volumes,
// thresholded into a binary occupancy mask. All volumes must share dimensions.
Volume mip_mask(const std::vector<Volume>& volumes, float threshold = 0.0f);

// Bring every axis to exactly `target`: symmetric zero padding where the
// extent is short, and where it is long a crop window centered on the
// dataset mask's bounding box (clamped into the array). Never removes a
// voxel that is set in dataset_mask.
Volume pad_crop(const Volume& v, std::size_t target, const Volume& dataset_mask);

// Linear map sending the volume's min to -1 and max to 1. Volumes already
// spanning [-1, 1] pass through bitwise unchanged.
Volume normalize_intensity(const Volume& v);

}  // namespace tabs
