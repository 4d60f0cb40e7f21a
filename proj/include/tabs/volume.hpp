#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tabs/tensor.hpp"

namespace tabs {

enum class Semantics : std::uint32_t {
  raw_t1 = 0,
  tissue_probs = 1,
  labels = 2,
  mask = 3,
};

const char* semantics_name(Semantics s);
Semantics semantics_from_name(const std::string& name);

// Channel-major volumetric grid; spatial order is row-major over (x,y,z) with
// z fastest, matching Tensor [C, dx, dy, dz].
struct Volume {
  std::size_t channels = 1;
  std::size_t dx = 0, dy = 0, dz = 0;
  Semantics semantics = Semantics::raw_t1;
  std::map<std::string, std::string> meta;  // subject / site / timepoint / provenance ...
  std::vector<float> values;

  Volume() = default;
  Volume(std::size_t channels, std::size_t dx, std::size_t dy, std::size_t dz,
         Semantics semantics);

  std::size_t voxels() const { return dx * dy * dz; }
  float& at(std::size_t c, std::size_t x, std::size_t y, std::size_t z) {
    return values[((c * dx + x) * dy + y) * dz + z];
  }
  float at(std::size_t c, std::size_t x, std::size_t y, std::size_t z) const {
    return values[((c * dx + x) * dy + y) * dz + z];
  }
  std::string meta_or(const std::string& key, const std::string& fallback) const;
};

// Structural + semantic validation (buffer length, probability sums).
// Throws DataError on violation.
void validate_volume(const Volume& v);

void save_volume(const Volume& v, const std::string& path);
Volume load_volume(const std::string& path);

struct VolumeInfo {
  std::size_t channels = 0;
  std::size_t dx = 0, dy = 0, dz = 0;
  Semantics semantics = Semantics::raw_t1;
  std::map<std::string, std::string> meta;
};

// Reads only the header; never touches the payload.
VolumeInfo inspect_volume(const std::string& path);

Tensor to_tensor(const Volume& v);
Volume from_tensor(const Tensor& t, Semantics semantics,
                   std::map<std::string, std::string> meta = {});

}  // namespace tabs
