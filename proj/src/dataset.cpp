#include "tabs/dataset.hpp"

#include <cstdio>
#include <random>

#include "tabs/common.hpp"
#include "tabs/split.hpp"

namespace tabs {

namespace fs = std::filesystem;

namespace {

constexpr char kHeader[] = "subject,site,timepoint,atrophy,scan,gt";

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(pos));
      break;
    }
    fields.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return fields;
}

std::string fmt_atrophy(double a) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", a);
  return buf;
}

std::string manifest_text(const std::vector<ManifestEntry>& entries) {
  std::string out = kHeader;
  out += '\n';
  for (const auto& e : entries) {
    out += e.subject + ',' + e.site + ',' + std::to_string(e.timepoint) + ',' +
           fmt_atrophy(e.atrophy) + ',' + e.scan_path + ',' + e.gt_path + '\n';
  }
  return out;
}

}  // namespace

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  const std::string text = read_file(path);
  const fs::path base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::size_t pos = 0;
  int lineno = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string line = nl == std::string::npos ? text.substr(pos) : text.substr(pos, nl - pos);
    pos = nl == std::string::npos ? text.size() : nl + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++lineno;
    if (line.empty()) continue;
    if (lineno == 1) {
      if (line != kHeader)
        throw DataError(path.string() + ": expected header '" + kHeader + "', got '" + line + "'");
      continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 6)
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 6 fields, got " +
                      std::to_string(f.size()));
    ManifestEntry e;
    e.subject = f[0];
    e.site = f[1];
    try {
      e.timepoint = std::stoi(f[2]);
      e.atrophy = std::stod(f[3]);
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad numeric field");
    }
    e.scan_path = (base / f[4]).lexically_normal().string();
    e.gt_path = (base / f[5]).lexically_normal().string();
    entries.push_back(std::move(e));
  }
  if (entries.empty()) throw UsageError(path.string() + ": manifest lists no subjects");
  return entries;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  atomic_write_file(path, manifest_text(entries));
}

std::vector<ManifestEntry> generate_dataset(const PhantomDatasetOptions& opts) {
  if (opts.count < 1) throw UsageError("dataset needs count >= 1");
  if (opts.atrophy_lo > opts.atrophy_hi || opts.atrophy_lo < 0 || opts.atrophy_hi > 1)
    throw UsageError("atrophy range must satisfy 0 <= lo <= hi <= 1");
  if (opts.out_dir.empty()) throw UsageError("dataset needs an output directory");
  const SiteParams site = SiteParams::preset(opts.site);
  std::error_code ec;
  fs::create_directories(opts.out_dir, ec);

  std::vector<ManifestEntry> entries;
  std::vector<double> atrophies(opts.count);
  for (int i = 0; i < opts.count; ++i) {
    const auto idx = static_cast<std::uint64_t>(i);
    std::mt19937_64 arng(mix_seed(opts.seed, 1000 + idx));
    std::uniform_real_distribution<double> adist(opts.atrophy_lo, opts.atrophy_hi);
    const double atrophy = opts.atrophy_lo == opts.atrophy_hi ? opts.atrophy_lo : adist(arng);
    atrophies[i] = atrophy;

    PhantomSpec spec = PhantomSpec::desk(opts.size);
    spec.geometry_seed = mix_seed(opts.seed, idx);
    spec.atrophy = atrophy;
    auto [gt, head_mask] = generate_phantom(spec);

    char name[32];
    std::snprintf(name, sizeof name, "s%03d", i);
    gt.meta["subject"] = name;
    gt.meta["site"] = site.id;
    const std::string gt_file = std::string("gt_") + name + ".vol";
    save_volume(gt, (opts.out_dir / gt_file).string());

    const int timepoints = opts.retest ? 2 : 1;
    for (int t = 1; t <= timepoints; ++t) {
      Volume scan = render_scan(gt, site, mix_seed(opts.seed, 2000 + 2 * idx + (t - 1)));
      scan.meta["subject"] = name;
      scan.meta["timepoint"] = std::to_string(t);
      char scan_file[48];
      std::snprintf(scan_file, sizeof scan_file, "scan_%s_t%d.vol", name, t);
      save_volume(scan, (opts.out_dir / scan_file).string());
      ManifestEntry e;
      e.subject = name;
      e.site = site.id;
      e.timepoint = t;
      e.atrophy = atrophy;
      e.scan_path = scan_file;  // relative inside the written manifest
      e.gt_path = gt_file;
      entries.push_back(std::move(e));
    }
  }

  atomic_write_file(opts.out_dir / "manifest.csv", manifest_text(entries));

  const SplitResult split = split_dataset(atrophies, opts.seed);
  auto write_split = [&](const char* file, const std::vector<std::size_t>& subjects) {
    std::vector<ManifestEntry> rows;
    for (std::size_t s : subjects)
      for (const auto& e : entries)
        if (e.subject == entries[s * (opts.retest ? 2 : 1)].subject) rows.push_back(e);
    atomic_write_file(opts.out_dir / file, manifest_text(rows));
  };
  write_split("train.csv", split.train);
  write_split("val.csv", split.val);
  write_split("test.csv", split.test);

  // Callers get resolved paths, same as read_manifest would produce.
  for (auto& e : entries) {
    e.scan_path = (opts.out_dir / e.scan_path).lexically_normal().string();
    e.gt_path = (opts.out_dir / e.gt_path).lexically_normal().string();
  }
  return entries;
}

}  // namespace tabs
