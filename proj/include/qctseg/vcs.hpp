// Vertebral coordinate system and analysis VOIs.
//
// The body's center of volume O is the origin. z is the tangent in O of an
// interpolating Catmull-Rom spline through the centers of volume of all
// segmented bodies, oriented cranially. y points from O toward the spinal
// canal, perpendicular to z; x = y cross z.
#pragma once

#include "errors.hpp"
#include "geometry.hpp"
#include "volume.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace qct {

struct VCSFrame {
  Vec3 origin;
  Vec3 x, y, z;

  double determinant() const { return dot(cross(x, y), z); }

  /// Coordinates of a point in the frame.
  Vec3 local(const Vec3 &p) const {
    const Vec3 d = p - origin;
    return {dot(d, x), dot(d, y), dot(d, z)};
  }
};

/// Unweighted mean of foreground voxel centers.
inline Vec3 center_of_volume(const LabelMask &mask) {
  const GridGeometry &g = mask.grid();
  Vec3 acc;
  std::size_t n = 0;
  for (int k = 0; k < g.nz(); ++k)
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i)
        if (mask.at(i, j, k)) {
          acc += g.center(i, j, k);
          ++n;
        }
  if (n == 0)
    throw PipelineError("center_of_volume: empty mask");
  return acc / static_cast<double>(n);
}

/// Cubic Hermite interpolation through the points with Catmull-Rom tangents
/// (P[i+1] - P[i-1]) / 2 and one-sided differences at both ends. Two points
/// give the straight segment.
class CenterSpline {
public:
  explicit CenterSpline(std::vector<Vec3> points) : p_(std::move(points)) {
    if (p_.size() < 2)
      throw InputError("center spline: need at least 2 points");
    for (std::size_t i = 0; i + 1 < p_.size(); ++i)
      if (norm(p_[i + 1] - p_[i]) <= 1e-12)
        throw InputError("center spline: duplicate consecutive points at index " + std::to_string(i));
    const std::size_t n = p_.size();
    m_.resize(n);
    m_[0] = p_[1] - p_[0];
    m_[n - 1] = p_[n - 1] - p_[n - 2];
    for (std::size_t i = 1; i + 1 < n; ++i)
      m_[i] = (p_[i + 1] - p_[i - 1]) * 0.5;
  }

  std::size_t size() const { return p_.size(); }
  const std::vector<Vec3> &points() const { return p_; }

  /// Point on segment i (between points i and i+1) at s in [0, 1].
  Vec3 evaluate(std::size_t i, double s) const {
    const double s2 = s * s, s3 = s2 * s;
    return p_[i] * (2 * s3 - 3 * s2 + 1) + m_[i] * (s3 - 2 * s2 + s) + p_[i + 1] * (-2 * s3 + 3 * s2) +
           m_[i + 1] * (s3 - s2);
  }

  /// Derivative on segment i at s.
  Vec3 derivative(std::size_t i, double s) const {
    const double s2 = s * s;
    return p_[i] * (6 * s2 - 6 * s) + m_[i] * (3 * s2 - 4 * s + 1) + p_[i + 1] * (-6 * s2 + 6 * s) +
           m_[i + 1] * (3 * s2 - 2 * s);
  }

  /// Unit tangent at control point i, in the direction of increasing index.
  Vec3 tangent(std::size_t i) const { return normalized(m_.at(i)); }

private:
  std::vector<Vec3> p_;
  std::vector<Vec3> m_;
};

inline CenterSpline fit_center_spline(const std::vector<Vec3> &covs) { return CenterSpline(covs); }

namespace detail {

/// Point where the polyline crosses the plane through `o` with normal `z`
/// (nearest crossing to o), else the polyline point closest to o.
inline Vec3 canal_point_in_plane(const Vec3 &o, const Vec3 &z, const std::vector<Vec3> &canal) {
  if (canal.size() == 1)
    return canal.front();
  std::optional<Vec3> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < canal.size(); ++i) {
    const double da = dot(canal[i] - o, z), db = dot(canal[i + 1] - o, z);
    if ((da > 0 && db > 0) || (da < 0 && db < 0) || da == db)
      continue;
    const Vec3 q = canal[i] + (canal[i + 1] - canal[i]) * (da / (da - db));
    if (const double d = distance(q, o); d < best_d) {
      best_d = d;
      best = q;
    }
  }
  if (best)
    return *best;
  Vec3 closest = canal.front();
  best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < canal.size(); ++i) {
    const Vec3 q = closest_point_on_segment(o, canal[i], canal[i + 1]);
    if (const double d = distance(q, o); d < best_d) {
      best_d = d;
      closest = q;
    }
  }
  return closest;
}

} // namespace detail

/// Frame at `cov` from the spline tangent there and the canal centerline.
inline VCSFrame build_vcs(const Vec3 &cov, const Vec3 &tangent, const std::vector<Vec3> &canal) {
  if (norm(tangent) <= 1e-12 || !is_finite(tangent))
    throw PipelineError("build_vcs: zero spline tangent");
  if (canal.empty())
    throw InputError("build_vcs: empty canal centerline");
  VCSFrame f;
  f.origin = cov;
  f.z = normalized(tangent);
  if (f.z.z < 0.0)
    f.z = -f.z;
  const Vec3 q = detail::canal_point_in_plane(cov, f.z, canal);
  const Vec3 d = q - cov;
  const Vec3 perp = d - f.z * dot(d, f.z);
  if (norm(perp) <= 1e-9 * std::max(1.0, norm(d)))
    throw PipelineError("build_vcs: canal lies on the z-axis (degenerate frame)");
  f.y = normalized(perp);
  f.x = normalized(cross(f.y, f.z));
  return f;
}

/// Frames for all bodies: spline through the centers of volume, tangent at each.
inline std::vector<VCSFrame> build_frames(const std::vector<Vec3> &covs, const std::vector<Vec3> &canal) {
  const CenterSpline spline(covs);
  std::vector<VCSFrame> frames;
  for (std::size_t i = 0; i < covs.size(); ++i)
    frames.push_back(build_vcs(covs[i], spline.tangent(i), canal));
  return frames;
}

// ---------------------------------------------------------------------------
// VOIs

struct VoiSpec {
  enum class Kind { whole_trabecular, cylinder, whole_body };
  std::string name;
  Kind kind = Kind::whole_trabecular;
  double height_fraction = 1.0; ///< of the body height along the frame z
  double radius_fraction = 1.0; ///< of the body's in-plane half-extents along frame x and y

  void validate() const {
    if (name.empty())
      throw ConfigError("vois", "VOI name must not be empty");
    if (kind == Kind::cylinder) {
      if (!(height_fraction > 0.0 && height_fraction <= 1.0))
        throw ConfigError("vois." + name + "_height", "must lie in (0, 1]");
      if (!(radius_fraction > 0.0 && radius_fraction <= 1.0))
        throw ConfigError("vois." + name + "_radius", "must lie in (0, 1]");
    }
  }

  static VoiSpec whole_trabecular(std::string name = "trabecular") { return {std::move(name), Kind::whole_trabecular}; }
  static VoiSpec whole_body(std::string name = "total") { return {std::move(name), Kind::whole_body}; }
  static VoiSpec cylinder(std::string name, double height_fraction, double radius_fraction) {
    return {std::move(name), Kind::cylinder, height_fraction, radius_fraction};
  }
};

/// Total body, whole trabecular compartment and the mid-vertebral cylinder.
inline std::vector<VoiSpec> default_vois() {
  return {VoiSpec::whole_body(), VoiSpec::whole_trabecular(), VoiSpec::cylinder("midcyl", 0.5, 0.6)};
}

struct NamedMask {
  std::string name;
  LabelMask mask;
};

/// Extent of the body in the frame: half-extents along x and y, and the
/// z-range, measured on voxel centers.
struct BodyExtent {
  double half_x = 0.0, half_y = 0.0;
  double z_lo = 0.0, z_hi = 0.0;
};

inline BodyExtent body_extent(const VCSFrame &frame, const LabelMask &body) {
  const GridGeometry &g = body.grid();
  BodyExtent e;
  e.z_lo = std::numeric_limits<double>::infinity();
  e.z_hi = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (!body[i])
      continue;
    any = true;
    const Vec3 l = frame.local(g.center(g.unravel(i)));
    e.half_x = std::max(e.half_x, std::abs(l.x));
    e.half_y = std::max(e.half_y, std::abs(l.y));
    e.z_lo = std::min(e.z_lo, l.z);
    e.z_hi = std::max(e.z_hi, l.z);
  }
  if (!any)
    throw PipelineError("body_extent: empty body mask");
  return e;
}

/// Cylinder VOIs are elliptic cylinders along the frame z centered at O, with
/// semi-axes radius_fraction * the body half-extents along x and y and height
/// height_fraction * the body height, intersected with the trabecular mask.
inline std::vector<NamedMask> define_vois(const VCSFrame &frame, const LabelMask &body, const LabelMask &trabecular,
                                          const std::vector<VoiSpec> &specs) {
  if (!(body.grid() == trabecular.grid()))
    throw InputError("define_vois: body and trabecular masks are on different grids");
  std::vector<NamedMask> out;
  std::optional<BodyExtent> ext;
  const GridGeometry &g = body.grid();
  for (const auto &spec : specs) {
    spec.validate();
    NamedMask voi{spec.name, LabelMask(g, 0)};
    switch (spec.kind) {
    case VoiSpec::Kind::whole_trabecular:
      voi.mask = trabecular;
      break;
    case VoiSpec::Kind::whole_body:
      voi.mask = body;
      break;
    case VoiSpec::Kind::cylinder: {
      if (!ext)
        ext = body_extent(frame, body);
      const double rx = spec.radius_fraction * ext->half_x;
      const double ry = spec.radius_fraction * ext->half_y;
      const double hz = 0.5 * spec.height_fraction * (ext->z_hi - ext->z_lo);
      for (std::size_t i = 0; i < trabecular.size(); ++i) {
        if (!trabecular[i])
          continue;
        const Vec3 l = frame.local(g.center(g.unravel(i)));
        if (std::abs(l.z) <= hz && (l.x / rx) * (l.x / rx) + (l.y / ry) * (l.y / ry) <= 1.0)
          voi.mask[i] = 1;
      }
      break;
    }
    }
    if (count_nonzero(voi.mask) == 0)
      throw PipelineError("define_vois: VOI '" + spec.name + "' is empty");
    out.push_back(std::move(voi));
  }
  return out;
}

} // namespace qct
