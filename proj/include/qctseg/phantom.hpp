// Synthetic lumbar-column phantoms with analytic ground truth.
//
// Each vertebra is an elliptic-cylinder body (trabecular core inside a
// cortical shell) plus a posterior arch: a ring around the spinal canal,
// two thin pedicle bars joining it to the body, two transverse processes and
// a spinous process. Consecutive bodies are separated by disks. The column
// axis is a circular arc in the y-z plane (a straight line for curvature 0).
//
// Axes: x lateral, +y posterior (toward the canal), +z cranial.
#pragma once

#include "errors.hpp"
#include "geometry.hpp"
#include "volume.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace qct {

struct PhantomSpec {
  int n_vertebrae = 3;
  double body_a = 15.0; ///< lateral semi-axis, mm
  double body_b = 10.0; ///< antero-posterior semi-axis, mm
  double body_h = 25.0; ///< body height, mm
  double disk_gap = 7.0;
  double cortical_thickness = 2.0;
  double pedicle_radius = 1.25;
  double arch_thickness = 5.0;
  double arch_height_fraction = 0.6;
  double process_length = 12.0;
  double process_half_thickness = 2.5;
  double canal_radius = 5.0;
  double canal_offset = 24.0; ///< body center to canal axis, mm
  double curvature = 0.0;     ///< 1/mm, bend of the column axis
  bool posterior_elements = true;
  double cortical_window = 0.0; ///< edge of a square hole cut in the lateral shell, mm (0 = none)

  double hu_trabecular = 150.0;
  double hu_cortical = 600.0;
  double hu_soft = 30.0;
  double hu_disk = 60.0;
  double noise_sigma = 15.0;
  std::uint64_t seed = 1;

  std::array<int, 3> dims{128, 128, 96};
  Vec3 spacing{1.0, 1.0, 1.0};

  double pedicle_length() const { return canal_offset - body_b - arch_thickness - canal_radius; }
  double vertebra_pitch() const { return body_h + disk_gap; }

  void validate() const {
    auto positive = [](double v, const char *key) {
      if (!(v > 0.0) || !std::isfinite(v))
        throw ConfigError(std::string("phantom.") + key, "must be > 0");
    };
    if (n_vertebrae < 2)
      throw ConfigError("phantom.n_vertebrae", "must be >= 2");
    positive(body_a, "body_a");
    positive(body_b, "body_b");
    positive(body_h, "body_h");
    positive(disk_gap, "disk_gap");
    positive(cortical_thickness, "cortical_thickness");
    positive(pedicle_radius, "pedicle_radius");
    positive(arch_thickness, "arch_thickness");
    positive(process_length, "process_length");
    positive(process_half_thickness, "process_half_thickness");
    positive(canal_radius, "canal_radius");
    positive(canal_offset, "canal_offset");
    if (!(arch_height_fraction > 0.0 && arch_height_fraction <= 1.0))
      throw ConfigError("phantom.arch_height_fraction", "must lie in (0, 1]");
    if (cortical_thickness * 2 >= std::min(body_a, body_b) || cortical_thickness * 2 >= body_h)
      throw ConfigError("phantom.cortical_thickness", "leaves no trabecular core");
    if (posterior_elements && !(pedicle_length() > 0.0))
      throw ConfigError("phantom.canal_offset", "too small for body_b + arch_thickness + canal_radius");
    if (curvature < 0.0 || !std::isfinite(curvature))
      throw ConfigError("phantom.curvature", "must be >= 0");
    if (cortical_window < 0.0)
      throw ConfigError("phantom.cortical_window", "must be >= 0");
    if (!(hu_cortical > hu_trabecular && hu_trabecular > hu_soft))
      throw ConfigError("phantom.hu_cortical", "materials must satisfy cortical > trabecular > soft tissue");
    if (noise_sigma < 0.0)
      throw ConfigError("phantom.noise_sigma", "must be >= 0");
    for (int a = 0; a < 3; ++a) {
      if (dims[a] < 1)
        throw ConfigError("phantom.dims", "must be >= 1");
      if (!(spacing[a] > 0.0))
        throw ConfigError("phantom.spacing", "must be > 0");
    }
  }
};

enum Material : std::uint8_t { kSoftTissue = 0, kDisk = 1, kTrabecular = 2, kCortical = 3 };

/// Local anatomical frame of one phantom vertebra.
struct VertebraFrame {
  Vec3 center;
  Vec3 lateral;   ///< +x
  Vec3 posterior; ///< toward the canal
  Vec3 axial;     ///< cranial tangent of the column

  Vec3 local(const Vec3 &p) const {
    const Vec3 d = p - center;
    return {dot(d, lateral), dot(d, posterior), dot(d, axial)};
  }
};

struct GroundTruth {
  // Label volumes: value = vertebra index + 1 (cranial first), 0 elsewhere.
  LabelMask total;
  LabelMask body;
  LabelMask processes;
  LabelMask trabecular;
  LabelMask material; ///< Material code per voxel (before noise)

  std::vector<VertebraFrame> frames;
  std::vector<Vec3> canal_axis; ///< cranial -> caudal, 1 mm sampling
  double body_volume_mm3 = 0.0; ///< analytic, per body

  std::vector<Vec3> centers() const {
    std::vector<Vec3> c;
    for (const auto &f : frames)
      c.push_back(f.center);
    return c;
  }
};

inline std::string level_name(std::size_t index) { return "L" + std::to_string(index + 1); }

/// pi * a * b * h of the elliptic-cylinder body, cortical shell included.
inline double analytic_volume(const PhantomSpec &spec) {
  return kPi * spec.body_a * spec.body_b * spec.body_h;
}

/// Noiseless trabecular density in mg/cm^3.
inline double analytic_bmd(const PhantomSpec &spec, const CalibrationParams &cal) {
  return cal.apply(spec.hu_trabecular);
}

namespace detail {

struct ColumnCurve {
  Vec3 anchor;
  double curvature;

  Vec3 point(double s) const {
    if (curvature == 0.0)
      return anchor + Vec3{0, 0, s};
    const double k = curvature;
    return anchor + Vec3{0, (1.0 - std::cos(k * s)) / k, std::sin(k * s) / k};
  }
  Vec3 tangent(double s) const { return {0, std::sin(curvature * s), std::cos(curvature * s)}; }
  Vec3 posterior(double s) const { return {0, std::cos(curvature * s), -std::sin(curvature * s)}; }
};

struct PartMembership {
  bool body = false;
  bool trabecular = false;
  bool window = false;
  bool posterior = false;
};

inline PartMembership classify_local(const PhantomSpec &s, const Vec3 &l) {
  PartMembership m;
  const double u = l.x, v = l.y, w = l.z;
  const double half_h = s.body_h / 2;
  // Half-open along the axis so a boundary on a voxel center is counted once.
  if (w >= -half_h && w < half_h && (u * u) / (s.body_a * s.body_a) + (v * v) / (s.body_b * s.body_b) <= 1.0) {
    m.body = true;
    const double ia = s.body_a - s.cortical_thickness, ib = s.body_b - s.cortical_thickness;
    const double half_t = half_h - s.cortical_thickness;
    m.trabecular = w >= -half_t && w < half_t && (u * u) / (ia * ia) + (v * v) / (ib * ib) <= 1.0;
    if (!m.trabecular && s.cortical_window > 0.0) {
      const double hw = s.cortical_window / 2;
      m.window = u > 0.0 && std::abs(v) <= hw && std::abs(w) <= hw;
    }
    return m;
  }
  if (!s.posterior_elements)
    return m;

  const double vc = s.canal_offset;
  const double r_out = s.canal_radius + s.arch_thickness;
  const double arch_half = s.arch_height_fraction * half_h;
  const double pt = s.process_half_thickness;
  const double ring_r = std::hypot(u, v - vc);
  if (std::abs(w) <= arch_half && ring_r >= s.canal_radius && ring_r <= r_out) {
    m.posterior = true;
    return m;
  }
  const double pedicle_u = s.canal_radius + s.arch_thickness / 2;
  if (v >= s.body_b - s.cortical_thickness && v <= vc) {
    for (double side : {-1.0, 1.0})
      if (std::hypot(u - side * pedicle_u, w) <= s.pedicle_radius) {
        m.posterior = true;
        return m;
      }
  }
  const double au = std::abs(u);
  if (std::abs(v - vc) <= pt && std::abs(w) <= pt && au >= r_out - 1.0 && au <= r_out + s.process_length) {
    m.posterior = true;
    return m;
  }
  if (au <= pt && std::abs(w) <= pt && v >= vc + r_out - 1.0 && v <= vc + r_out + s.process_length) {
    m.posterior = true;
    return m;
  }
  return m;
}

} // namespace detail

/// Builds the phantom volume (HU, integer-valued) and its ground truth.
/// Deterministic for a fixed PhantomSpec (including the seed).
inline std::pair<HuVolume, GroundTruth> generate_phantom(const PhantomSpec &spec) {
  spec.validate();
  GridGeometry grid;
  grid.dims = spec.dims;
  grid.spacing = spec.spacing;
  grid.origin = {};
  const Vec3 ext = grid.extent();

  const int n = spec.n_vertebrae;
  const double pitch = spec.vertebra_pitch();
  const double r_out = spec.canal_radius + spec.arch_thickness;
  const double post_max =
      spec.posterior_elements ? spec.canal_offset + r_out + spec.process_length : spec.body_b;
  const double lat_max = spec.posterior_elements ? std::max(spec.body_a, r_out + spec.process_length) : spec.body_a;

  detail::ColumnCurve curve;
  curve.curvature = spec.curvature;
  curve.anchor = {ext.x / 2, ext.y / 2 - (post_max - spec.body_b) / 2, ext.z / 2};

  GroundTruth gt;
  gt.body_volume_mm3 = analytic_volume(spec);
  for (int i = 0; i < n; ++i) {
    const double s = ((n - 1) / 2.0 - i) * pitch;
    gt.frames.push_back({curve.point(s), {1, 0, 0}, curve.posterior(s), curve.tangent(s)});
  }

  // Every corner of every vertebra's local bounding box must sit inside the grid.
  for (const auto &f : gt.frames) {
    for (double u : {-lat_max, lat_max})
      for (double v : {-spec.body_b, post_max})
        for (double w : {-spec.body_h / 2, spec.body_h / 2}) {
          const Vec3 p = f.center + f.lateral * u + f.posterior * v + f.axial * w;
          for (int a = 0; a < 3; ++a)
            if (p[a] < grid.spacing[a] || p[a] > ext[a] - grid.spacing[a])
              throw InputError("phantom geometry does not fit the grid");
        }
  }

  const double s_top = ((n - 1) / 2.0) * pitch + spec.body_h / 2 + spec.disk_gap;
  for (double s = s_top; s >= -s_top - 1e-9; s -= 1.0) {
    const Vec3 p = curve.point(s) + curve.posterior(s) * spec.canal_offset;
    if (p.z >= 0.0 && p.z <= ext.z)
      gt.canal_axis.push_back(p);
  }

  std::vector<VertebraFrame> disks;
  for (int i = 0; i + 1 < n; ++i) {
    const double s = ((n - 1) / 2.0 - i - 0.5) * pitch;
    disks.push_back({curve.point(s), {1, 0, 0}, curve.posterior(s), curve.tangent(s)});
  }

  HuVolume vol(grid, static_cast<float>(spec.hu_soft));
  gt.total = LabelMask(grid, 0);
  gt.body = LabelMask(grid, 0);
  gt.processes = LabelMask(grid, 0);
  gt.trabecular = LabelMask(grid, 0);
  gt.material = LabelMask(grid, kSoftTissue);

  const double reach = std::hypot(lat_max, std::max(post_max, spec.body_b)) + spec.body_h;
  for (int k = 0; k < grid.nz(); ++k)
    for (int j = 0; j < grid.ny(); ++j)
      for (int i = 0; i < grid.nx(); ++i) {
        const Vec3 p = grid.center(i, j, k);
        const std::size_t idx = grid.linear(i, j, k);
        for (const auto &d : disks) {
          const Vec3 l = d.local(p);
          if (std::abs(l.z) <= spec.disk_gap / 2 + 1.0 &&
              (l.x * l.x) / (spec.body_a * spec.body_a) + (l.y * l.y) / (spec.body_b * spec.body_b) <= 1.0)
            gt.material[idx] = kDisk;
        }
        for (int v = 0; v < n; ++v) {
          const auto &f = gt.frames[static_cast<std::size_t>(v)];
          if (norm2(p - f.center) > reach * reach)
            continue;
          const auto m = detail::classify_local(spec, f.local(p));
          const auto label = static_cast<std::uint8_t>(v + 1);
          if (m.body) {
            gt.body[idx] = label;
            gt.total[idx] = label;
            if (m.trabecular) {
              gt.trabecular[idx] = label;
              gt.material[idx] = kTrabecular;
            } else {
              gt.material[idx] = m.window ? kSoftTissue : kCortical;
            }
          } else if (m.posterior && !gt.body[idx]) {
            gt.total[idx] = label;
            gt.processes[idx] = label;
            gt.material[idx] = kCortical;
          }
        }
      }

  const double hu[4] = {spec.hu_soft, spec.hu_disk, spec.hu_trabecular, spec.hu_cortical};
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0 ? spec.noise_sigma : 1.0);
  for (std::size_t idx = 0; idx < vol.size(); ++idx) {
    double value = hu[gt.material[idx]];
    if (spec.noise_sigma > 0.0)
      value = std::round(value + noise(rng));
    vol[idx] = static_cast<float>(value);
  }
  return {std::move(vol), std::move(gt)};
}

} // namespace qct
