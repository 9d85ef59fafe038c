// Regular 3D voxel grids: geometry, storage, calibration, trilinear sampling
// and in-plane FOV resampling.
//
// Physical convention used throughout the toolkit: voxel (i,j,k) has its
// center at origin + ((i+0.5)*sx, (j+0.5)*sy, (k+0.5)*sz). Data is stored
// x-fastest.
#pragma once

#include "errors.hpp"
#include "geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace qct {

struct Index3 {
  int i = 0;
  int j = 0;
  int k = 0;
  constexpr bool operator==(const Index3 &) const = default;
};

struct GridGeometry {
  std::array<int, 3> dims{1, 1, 1};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{};

  std::size_t size() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
           static_cast<std::size_t>(dims[2]);
  }
  int nx() const { return dims[0]; }
  int ny() const { return dims[1]; }
  int nz() const { return dims[2]; }

  std::size_t linear(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(k));
  }
  std::size_t linear(const Index3 &v) const { return linear(v.i, v.j, v.k); }

  Index3 unravel(std::size_t idx) const {
    const auto nx_ = static_cast<std::size_t>(dims[0]);
    const auto ny_ = static_cast<std::size_t>(dims[1]);
    return {static_cast<int>(idx % nx_), static_cast<int>((idx / nx_) % ny_),
            static_cast<int>(idx / (nx_ * ny_))};
  }

  bool contains(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims[0] && j < dims[1] && k < dims[2];
  }

  Vec3 center(int i, int j, int k) const {
    return {origin.x + (i + 0.5) * spacing.x, origin.y + (j + 0.5) * spacing.y,
            origin.z + (k + 0.5) * spacing.z};
  }
  Vec3 center(const Index3 &v) const { return center(v.i, v.j, v.k); }

  /// Fractional voxel index of a physical point (voxel centers map to integers).
  Vec3 continuous_index(const Vec3 &p) const {
    return {(p.x - origin.x) / spacing.x - 0.5, (p.y - origin.y) / spacing.y - 0.5,
            (p.z - origin.z) / spacing.z - 0.5};
  }

  /// Physical extent of the grid along each axis (dims * spacing).
  Vec3 extent() const { return {dims[0] * spacing.x, dims[1] * spacing.y, dims[2] * spacing.z}; }

  double voxel_volume() const { return spacing.x * spacing.y * spacing.z; }
  double min_spacing() const { return std::min({spacing.x, spacing.y, spacing.z}); }
  double max_spacing() const { return std::max({spacing.x, spacing.y, spacing.z}); }

  void validate() const {
    for (int a = 0; a < 3; ++a) {
      if (dims[a] < 1)
        throw InputError("grid dims must be >= 1 in every axis");
      if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
        throw InputError("grid spacing must be > 0 in every axis");
      if (!std::isfinite(origin[a]))
        throw InputError("grid origin must be finite");
    }
  }

  bool operator==(const GridGeometry &) const = default;
};

template <typename T> class Volume {
public:
  using value_type = T;

  Volume() = default;
  explicit Volume(GridGeometry grid, T fill = T{}) : grid_(grid) {
    grid_.validate();
    data_.assign(grid_.size(), fill);
  }
  Volume(GridGeometry grid, std::vector<T> data) : grid_(grid), data_(std::move(data)) {
    grid_.validate();
    if (data_.size() != grid_.size())
      throw InputError("volume data length " + std::to_string(data_.size()) + " does not match dims (" +
                       std::to_string(grid_.size()) + ")");
  }

  const GridGeometry &grid() const { return grid_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T &operator[](std::size_t idx) { return data_[idx]; }
  const T &operator[](std::size_t idx) const { return data_[idx]; }
  T &at(int i, int j, int k) { return data_[grid_.linear(i, j, k)]; }
  const T &at(int i, int j, int k) const { return data_[grid_.linear(i, j, k)]; }
  T &at(const Index3 &v) { return data_[grid_.linear(v)]; }
  const T &at(const Index3 &v) const { return data_[grid_.linear(v)]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T> &storage() { return data_; }
  const std::vector<T> &storage() const { return data_; }

  bool operator==(const Volume &) const = default;

private:
  GridGeometry grid_;
  std::vector<T> data_;
};

/// Hounsfield-unit image. Samples are integer-valued when read from i16 files.
using HuVolume = Volume<float>;
/// Binary or small-label voxel mask on a grid shared with its source image.
using LabelMask = Volume<std::uint8_t>;

template <typename T> LabelMask make_mask(const Volume<T> &like) { return LabelMask(like.grid(), 0); }

inline std::size_t count_nonzero(const LabelMask &m) {
  return static_cast<std::size_t>(std::count_if(m.storage().begin(), m.storage().end(), [](auto v) { return v != 0; }));
}

// ---------------------------------------------------------------------------
// Calibration

struct CalibrationParams {
  double slope = 0.8;     ///< (mg/cm^3) per HU
  double intercept = 0.0; ///< mg/cm^3

  void validate() const {
    if (slope == 0.0 || !std::isfinite(slope))
      throw ConfigError("calibration.slope", "must be finite and non-zero");
    if (!std::isfinite(intercept))
      throw ConfigError("calibration.intercept", "must be finite");
  }
  double apply(double hu) const { return slope * hu + intercept; }
};

/// Linear HU -> mg/cm^3 map applied voxel-wise.
template <typename T> Volume<double> calibrate(const Volume<T> &vol, const CalibrationParams &cal) {
  Volume<double> out(vol.grid(), 0.0);
  for (std::size_t i = 0; i < vol.size(); ++i)
    out[i] = cal.apply(static_cast<double>(vol[i]));
  return out;
}

// ---------------------------------------------------------------------------
// Interpolation

namespace detail {

struct AxisSample {
  int i0;
  int i1;
  double w1; // weight of i1
};

inline AxisSample axis_sample(double ci, int n) {
  if (n == 1 || ci <= 0.0)
    return {0, 0, 0.0};
  if (ci >= n - 1)
    return {n - 1, n - 1, 0.0};
  const double r = std::round(ci);
  if (std::abs(ci - r) < 1e-9) {
    const int i = static_cast<int>(r);
    return {i, i, 0.0};
  }
  const int i0 = static_cast<int>(std::floor(ci));
  return {i0, i0 + 1, ci - i0};
}

} // namespace detail

/// Trilinear interpolation at a physical point. Points outside the hull of
/// voxel centers are clamped to the nearest edge voxel.
template <typename T> double sample_trilinear(const Volume<T> &vol, const Vec3 &p) {
  const GridGeometry &g = vol.grid();
  const Vec3 ci = g.continuous_index(p);
  const auto ax = detail::axis_sample(ci.x, g.dims[0]);
  const auto ay = detail::axis_sample(ci.y, g.dims[1]);
  const auto az = detail::axis_sample(ci.z, g.dims[2]);
  auto v = [&](int i, int j, int k) { return static_cast<double>(vol.at(i, j, k)); };
  const double c00 = v(ax.i0, ay.i0, az.i0) * (1 - ax.w1) + v(ax.i1, ay.i0, az.i0) * ax.w1;
  const double c10 = v(ax.i0, ay.i1, az.i0) * (1 - ax.w1) + v(ax.i1, ay.i1, az.i0) * ax.w1;
  const double c01 = v(ax.i0, ay.i0, az.i1) * (1 - ax.w1) + v(ax.i1, ay.i0, az.i1) * ax.w1;
  const double c11 = v(ax.i0, ay.i1, az.i1) * (1 - ax.w1) + v(ax.i1, ay.i1, az.i1) * ax.w1;
  const double c0 = c00 * (1 - ay.w1) + c10 * ay.w1;
  const double c1 = c01 * (1 - ay.w1) + c11 * ay.w1;
  return c0 * (1 - az.w1) + c1 * az.w1;
}

// ---------------------------------------------------------------------------
// FOV resampling

/// Reconstruction geometry of a simulated scan.
struct ScanSpec {
  double fov_mm = 250.0;
  int matrix = 512;
  double slice_thickness_mm = 1.0;

  double pixel_mm() const { return fov_mm / matrix; }
  void validate() const {
    if (!(fov_mm > 0.0) || !std::isfinite(fov_mm))
      throw ConfigError("scan.fov_mm", "must be > 0");
    if (matrix < 1)
      throw ConfigError("scan.matrix", "must be >= 1");
    if (!(slice_thickness_mm > 0.0))
      throw ConfigError("scan.slice_thickness_mm", "must be > 0");
  }
};

/// Resamples the x/y plane to the scan's pixel size, keeping z untouched and
/// the physical start corner fixed. Values come from trilinear sampling.
template <std::floating_point T> Volume<T> resample_fov(const Volume<T> &vol, const ScanSpec &spec) {
  spec.validate();
  const GridGeometry &in = vol.grid();
  const double px = spec.pixel_mm();
  const Vec3 ext = in.extent();
  const long nx = std::lround(ext.x / px);
  const long ny = std::lround(ext.y / px);
  if (nx < 1 || ny < 1)
    throw InputError("resample_fov: pixel size " + std::to_string(px) + " mm yields an empty grid");

  GridGeometry out_grid = in;
  out_grid.dims = {static_cast<int>(nx), static_cast<int>(ny), in.dims[2]};
  out_grid.spacing = {px, px, in.spacing.z};
  Volume<T> out(out_grid, T{});

  auto axis_table = [&](long n, double in_spacing, int in_n) {
    std::vector<detail::AxisSample> table(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
      const double ci = (i + 0.5) * (px / in_spacing) - 0.5;
      table[static_cast<std::size_t>(i)] = detail::axis_sample(ci, in_n);
    }
    return table;
  };
  const auto tx = axis_table(nx, in.spacing.x, in.dims[0]);
  const auto ty = axis_table(ny, in.spacing.y, in.dims[1]);

  for (int k = 0; k < in.dims[2]; ++k) {
    for (long j = 0; j < ny; ++j) {
      const auto &ay = ty[static_cast<std::size_t>(j)];
      for (long i = 0; i < nx; ++i) {
        const auto &ax = tx[static_cast<std::size_t>(i)];
        const double c0 = vol.at(ax.i0, ay.i0, k) * (1 - ax.w1) + vol.at(ax.i1, ay.i0, k) * ax.w1;
        const double c1 = vol.at(ax.i0, ay.i1, k) * (1 - ax.w1) + vol.at(ax.i1, ay.i1, k) * ax.w1;
        out.at(static_cast<int>(i), static_cast<int>(j), k) = static_cast<T>(c0 * (1 - ay.w1) + c1 * ay.w1);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sub-grids

/// Inclusive-exclusive index box [lo, hi).
struct IndexBox {
  Index3 lo;
  Index3 hi;
  bool empty() const { return hi.i <= lo.i || hi.j <= lo.j || hi.k <= lo.k; }
};

inline GridGeometry sub_grid(const GridGeometry &g, const IndexBox &box) {
  GridGeometry out = g;
  out.dims = {box.hi.i - box.lo.i, box.hi.j - box.lo.j, box.hi.k - box.lo.k};
  out.origin = {g.origin.x + box.lo.i * g.spacing.x, g.origin.y + box.lo.j * g.spacing.y,
                g.origin.z + box.lo.k * g.spacing.z};
  return out;
}

template <typename T> Volume<T> crop(const Volume<T> &vol, const IndexBox &box) {
  Volume<T> out(sub_grid(vol.grid(), box), T{});
  for (int k = box.lo.k; k < box.hi.k; ++k)
    for (int j = box.lo.j; j < box.hi.j; ++j)
      for (int i = box.lo.i; i < box.hi.i; ++i)
        out.at(i - box.lo.i, j - box.lo.j, k - box.lo.k) = vol.at(i, j, k);
  return out;
}

/// Writes `label` into `dst` wherever the cropped `mask` (taken from `box`) is set.
inline void paste_label(LabelMask &dst, const LabelMask &mask, const IndexBox &box, std::uint8_t label) {
  for (int k = 0; k < mask.grid().nz(); ++k)
    for (int j = 0; j < mask.grid().ny(); ++j)
      for (int i = 0; i < mask.grid().nx(); ++i)
        if (mask.at(i, j, k))
          dst.at(i + box.lo.i, j + box.lo.j, k + box.lo.k) = label;
}

} // namespace qct
