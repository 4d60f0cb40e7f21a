#include "tabs/phantom.hpp"

#include <cmath>
#include <random>

#include "tabs/common.hpp"

namespace tabs {

namespace {

struct Ellipsoid {
  std::array<double, 3> axes;
  // Mean radius used to turn the relative level-set value into voxel units.
  double radius() const { return std::cbrt(axes[0] * axes[1] * axes[2]); }
};

// Relative level set: <1 inside, 1 on the surface.
double rho(const Ellipsoid& e, double px, double py, double pz) {
  const double a = px / e.axes[0], b = py / e.axes[1], c = pz / e.axes[2];
  return std::sqrt(a * a + b * b + c * c);
}

// Logistic step over the surface: ~0 deep inside, ~1 far outside.
double outside(const Ellipsoid& e, double px, double py, double pz, double sigma) {
  const double d = (rho(e, px, py, pz) - 1.0) * e.radius();
  return 1.0 / (1.0 + std::exp(-d / sigma));
}

struct Geometry {
  Ellipsoid head, gm, wm, vent;
  std::array<double, 3> center;
};

Geometry effective_geometry(const PhantomSpec& spec) {
  std::mt19937_64 rng(spec.geometry_seed);
  std::uniform_real_distribution<double> center_jitter(-0.02, 0.02);
  std::uniform_real_distribution<double> axis_jitter(0.95, 1.05);
  Geometry g;
  for (int i = 0; i < 3; ++i)
    g.center[i] = spec.size / 2.0 + center_jitter(rng) * spec.size;
  auto jittered = [&](const std::array<double, 3>& axes) {
    Ellipsoid e;
    for (int i = 0; i < 3; ++i) e.axes[i] = axes[i] * axis_jitter(rng);
    return e;
  };
  g.head = jittered(spec.head_axes);
  g.gm = jittered(spec.gm_axes);
  g.wm = jittered(spec.wm_axes);
  g.vent = jittered(spec.vent_axes);
  // Atrophy: ventricles expand, the GM shell's outer surface recedes.
  for (int i = 0; i < 3; ++i) {
    g.vent.axes[i] *= 1.0 + 0.6 * spec.atrophy;
    g.gm.axes[i] *= 1.0 - 0.12 * spec.atrophy;
  }
  for (int i = 0; i < 3; ++i) {
    if (!(g.vent.axes[i] < g.wm.axes[i] && g.wm.axes[i] < g.gm.axes[i] &&
          g.gm.axes[i] < g.head.axes[i]))
      throw UsageError("phantom geometry not nested on axis " + std::to_string(i) +
                       " (ventricle < WM core < GM shell < head required)");
  }
  return g;
}

}  // namespace

PhantomSpec PhantomSpec::desk(int n) {
  PhantomSpec spec;
  spec.size = n;
  const double s = n / 32.0;
  for (int i = 0; i < 3; ++i) {
    spec.head_axes[i] *= s;
    spec.gm_axes[i] *= s;
    spec.wm_axes[i] *= s;
    spec.vent_axes[i] *= s;
  }
  return spec;
}

SiteParams SiteParams::preset(const std::string& name) {
  SiteParams p;
  p.id = name;
  if (name == "siteA") {
    // defaults
  } else if (name == "siteB") {
    p.mean_gm = 0.50;
    p.mean_wm = 0.85;
    p.mean_csf = 0.20;
    p.noise_sigma = 0.03;
    p.bias_amplitude = 0.15;
    p.bias_scale = 16.0;
    p.gain = 1.2;
  } else if (name == "siteC") {
    p.mean_gm = 0.60;
    p.mean_wm = 0.75;
    p.mean_csf = 0.30;
    p.noise_sigma = 0.015;
    p.bias_amplitude = 0.05;
    p.bias_scale = 32.0;
    p.gain = 0.9;
  } else if (name == "siteD") {
    p.mean_gm = 0.52;
    p.mean_wm = 0.78;
    p.mean_csf = 0.22;
    p.noise_sigma = 0.025;
    p.bias_amplitude = 0.12;
    p.bias_scale = 20.0;
    p.gain = 1.05;
  } else {
    throw UsageError("unknown site preset '" + name + "' (siteA..siteD)");
  }
  return p;
}

void validate_spec(const PhantomSpec& spec) {
  if (spec.size <= 0 || spec.size % 16)
    throw UsageError("phantom size " + std::to_string(spec.size) + " not divisible by 16");
  if (spec.atrophy < 0.0 || spec.atrophy > 1.0)
    throw UsageError("atrophy must lie in [0,1]");
  if (spec.sigma_b <= 0.0) throw UsageError("boundary softness must be positive");
  for (int i = 0; i < 3; ++i)
    if (!(spec.vent_axes[i] > 0 && spec.vent_axes[i] < spec.wm_axes[i] &&
          spec.wm_axes[i] < spec.gm_axes[i] && spec.gm_axes[i] < spec.head_axes[i]))
      throw UsageError("phantom geometry not nested on axis " + std::to_string(i) +
                       " (ventricle < WM core < GM shell < head required)");
}

void validate_site(const SiteParams& site) {
  if (site.mean_gm == site.mean_wm || site.mean_gm == site.mean_csf ||
      site.mean_wm == site.mean_csf)
    throw UsageError("site tissue means must be pairwise distinct");
  if (site.noise_sigma < 0.0) throw UsageError("noise sigma must be >= 0");
  if (site.bias_amplitude < 0.0 || site.bias_amplitude >= 1.0)
    throw UsageError("bias amplitude must lie in [0,1)");
  if (site.bias_scale <= 0.0) throw UsageError("bias scale must be positive");
  if (site.gain <= 0.0) throw UsageError("gain must be positive");
}

std::pair<Volume, Volume> generate_phantom(const PhantomSpec& spec) {
  validate_spec(spec);
  const Geometry g = effective_geometry(spec);
  const std::size_t n = static_cast<std::size_t>(spec.size);
  Volume gt(3, n, n, n, Semantics::tissue_probs);
  Volume mask(1, n, n, n, Semantics::mask);
  const std::size_t voxels = gt.voxels();
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t z = 0; z < n; ++z) {
        const double px = x + 0.5 - g.center[0];
        const double py = y + 0.5 - g.center[1];
        const double pz = z + 0.5 - g.center[2];
        if (rho(g.head, px, py, pz) > 1.0) continue;  // hard head boundary
        const std::size_t i = (x * n + y) * n + z;
        mask.values[i] = 1.0f;
        // Stick-breaking over the nested surfaces; the four pieces sum to 1.
        const double uv = outside(g.vent, px, py, pz, spec.sigma_b);
        const double uw = outside(g.wm, px, py, pz, spec.sigma_b);
        const double ug = outside(g.gm, px, py, pz, spec.sigma_b);
        const double csf_vent = 1.0 - uv;
        const double wm = uv * (1.0 - uw);
        const double gm = uv * uw * (1.0 - ug);
        const double csf_outer = uv * uw * ug;
        gt.values[i] = static_cast<float>(gm);
        gt.values[voxels + i] = static_cast<float>(wm);
        gt.values[2 * voxels + i] = static_cast<float>(csf_vent + csf_outer);
      }
  gt.meta["provenance"] = "phantom";
  gt.meta["atrophy"] = std::to_string(spec.atrophy);
  gt.meta["geometry_seed"] = std::to_string(spec.geometry_seed);
  mask.meta = gt.meta;
  return {std::move(gt), std::move(mask)};
}

Volume render_scan(const Volume& gt, const SiteParams& site, std::uint64_t noise_seed) {
  validate_site(site);
  if (gt.semantics != Semantics::tissue_probs || gt.channels != 3)
    throw UsageError("render_scan expects a 3-channel tissue_probs volume");
  validate_volume(gt);
  Volume scan(1, gt.dx, gt.dy, gt.dz, Semantics::raw_t1);
  std::mt19937_64 rng(noise_seed);
  // Bias coefficients are always drawn so the random stream depends only on
  // the seed, never on the site parameters.
  std::uniform_real_distribution<double> coeff(-1.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * 3.14159265358979323846);
  double c[3], ph[3], csum = 0.0;
  for (int j = 0; j < 3; ++j) {
    c[j] = coeff(rng);
    ph[j] = phase(rng);
    csum += std::abs(c[j]);
  }
  if (csum == 0.0) csum = 1.0;
  const double cyc_x = std::max(1.0, std::round(gt.dx / site.bias_scale));
  const double cyc_y = std::max(1.0, std::round(gt.dy / site.bias_scale));
  const double cyc_z = std::max(1.0, std::round(gt.dz / site.bias_scale));
  const double tau = 2.0 * 3.14159265358979323846;
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t voxels = gt.voxels();
  for (std::size_t x = 0; x < gt.dx; ++x)
    for (std::size_t y = 0; y < gt.dy; ++y)
      for (std::size_t z = 0; z < gt.dz; ++z) {
        const std::size_t i = (x * gt.dy + y) * gt.dz + z;
        const double field = (c[0] * std::cos(tau * cyc_x * (x + 0.5) / gt.dx + ph[0]) +
                              c[1] * std::cos(tau * cyc_y * (y + 0.5) / gt.dy + ph[1]) +
                              c[2] * std::cos(tau * cyc_z * (z + 0.5) / gt.dz + ph[2])) /
                             csum;
        const double bias = 1.0 + site.bias_amplitude * field;
        const double signal = gt.values[i] * site.mean_gm + gt.values[voxels + i] * site.mean_wm +
                              gt.values[2 * voxels + i] * site.mean_csf;
        double v = site.gain * bias * signal;
        if (site.noise_sigma > 0.0) v += site.noise_sigma * noise(rng);
        scan.values[i] = static_cast<float>(v);
      }
  scan.meta = gt.meta;
  scan.meta["provenance"] = "scan";
  scan.meta["site"] = site.id;
  scan.meta["noise_seed"] = std::to_string(noise_seed);
  return scan;
}

}  // namespace tabs
