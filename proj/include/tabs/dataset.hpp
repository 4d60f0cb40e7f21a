#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tabs/phantom.hpp"

namespace tabs {

struct ManifestEntry {
  std::string subject;
  std::string site;
  int timepoint = 1;
  double atrophy = 0.0;
  std::string scan_path;  // resolved against the manifest's directory on read
  std::string gt_path;
};

// CSV with header subject,site,timepoint,atrophy,scan,gt. Paths inside the
// file are relative to the manifest location.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

struct PhantomDatasetOptions {
  int count = 5;
  int size = 32;
  std::string site = "siteA";
  double atrophy_lo = 0.0, atrophy_hi = 1.0;
  bool retest = false;  // two scans per subject sharing one ground truth
  std::uint64_t seed = 1;
  std::filesystem::path out_dir;
};

// Writes gt_/scan_ volumes, manifest.csv, and stratified 3:1:1 sub-manifests
// train.csv/val.csv/test.csv (split at subject level over the atrophy
// covariate). Deterministic in the options.
std::vector<ManifestEntry> generate_dataset(const PhantomDatasetOptions& opts);

}  // namespace tabs
