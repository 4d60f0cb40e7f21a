#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>

#include "tabs/volume.hpp"

namespace tabs {

// Nested-ellipsoid head geometry. Semi-axes are in voxels for atrophy = 0;
// the atrophy covariate grows the ventricles and thins the GM shell.
struct PhantomSpec {
  int size = 32;  // N, cube edge
  std::uint64_t geometry_seed = 1;
  double atrophy = 0.0;  // a in [0,1]
  std::array<double, 3> head_axes{14.0, 13.0, 13.5};
  std::array<double, 3> gm_axes{12.0, 11.0, 11.5};
  std::array<double, 3> wm_axes{8.5, 7.5, 8.0};
  std::array<double, 3> vent_axes{3.5, 3.0, 3.2};
  double sigma_b = 1.0;  // logistic boundary width, voxels

  // Geometry scaled to an N-cube with room between the nested surfaces.
  static PhantomSpec desk(int n = 32);
};

// Acquisition differences between synthetic sites.
struct SiteParams {
  std::string id = "siteA";
  double mean_gm = 0.55, mean_wm = 0.80, mean_csf = 0.25;
  double noise_sigma = 0.02;   // sigma_n
  double bias_amplitude = 0.10;  // beta
  double bias_scale = 24.0;    // bias field wavelength, voxels
  double gain = 1.0;

  static SiteParams preset(const std::string& name);  // siteA..siteD
};

void validate_spec(const PhantomSpec& spec);
void validate_site(const SiteParams& site);

// Soft tissue probability maps (channels GM, WM, CSF) plus the hard head mask.
// Inside the mask the probabilities sum to 1; outside everything is 0.
std::pair<Volume, Volume> generate_phantom(const PhantomSpec& spec);

// T1-like scan: gain * bias_field(x) * sum_t prob_t * mean_t + N(0, sigma_n).
Volume render_scan(const Volume& gt, const SiteParams& site, std::uint64_t noise_seed);

}  // namespace tabs
