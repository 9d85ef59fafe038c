// Preprocessing constraints: operator-marked vertebra centers, the spinal
// canal centerline (rolling ball), disk planes and the per-vertebra enclosing
// cylinders that confine every later stage.
#pragma once

#include "errors.hpp"
#include "geometry.hpp"
#include "volume.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

namespace qct {

/// Closed cylinder clipped by up to two planes. A point is inside when it
/// lies within `radius` of the axis line and on the negative side of every
/// clip plane (plane normals point out of the cylinder).
struct Cylinder {
  Vec3 base;   ///< marked vertebra center
  Vec3 axis;   ///< unit, cranial
  double radius = 0.0;
  std::optional<Plane> cranial_cap; ///< absent for the most cranial vertebra
  std::optional<Plane> caudal_cap;  ///< absent for the most caudal vertebra

  double radial_distance(const Vec3 &p) const {
    const Vec3 d = p - base;
    return norm(d - axis * dot(d, axis));
  }

  bool contains(const Vec3 &p) const {
    if (radial_distance(p) > radius)
      return false;
    // Strict on one side, inclusive on the other: a point on a shared disk
    // plane belongs to exactly one of the two neighbouring cylinders.
    if (cranial_cap && cranial_cap->signed_distance(p) >= 0.0)
      return false;
    if (caudal_cap && caudal_cap->signed_distance(p) > 0.0)
      return false;
    return true;
  }

  /// Nearest point of the cylinder to `p` (identity for interior points).
  Vec3 clamp(const Vec3 &p, double inset = 1e-6) const {
    Vec3 q = p;
    const Vec3 d = q - base;
    const double along = dot(d, axis);
    const Vec3 radial = d - axis * along;
    const double r = norm(radial);
    if (r > radius - inset && r > 0.0)
      q = base + axis * along + radial * ((radius - inset) / r);
    for (const auto *cap : {&cranial_cap, &caudal_cap}) {
      if (*cap) {
        const double sd = (*cap)->signed_distance(q);
        if (sd > -inset)
          q -= (*cap)->normal * (sd + inset);
      }
    }
    return q;
  }
};

struct LandmarkSet {
  std::vector<Vec3> centers; ///< cranial -> caudal
  std::vector<Vec3> canal;   ///< centerline polyline, cranial -> caudal
  std::vector<Plane> disk_planes;
  std::vector<Cylinder> cylinders;
};

struct RollingBallParams {
  double radius = 4.0;         ///< mm
  double step = 2.0;           ///< axial advance, mm
  double threshold = 100.0;    ///< HU; voxels below count as canal lumen
  double search_window = 40.0; ///< posterior search depth for the first canal position, mm
  Vec3 posterior{0, 1, 0};     ///< canal side of the vertebral bodies
  int recenter_iterations = 5;
};

struct PlaneFitParams {
  double slab = 3.0;            ///< mm
  double bone_threshold = 200.0; ///< HU
  double slab_radius = 20.0;    ///< lateral extent of the slab around the spine line, mm
  double t_min = 0.3;
  double t_max = 0.7;
};

struct CylinderParams {
  double margin = 3.0; ///< mm kept clear of the canal centerline
  double r_min = 8.0;  ///< mm
};

// ---------------------------------------------------------------------------

/// One `x y z` triple (mm) per line, `#` starts a comment.
inline std::vector<Vec3> read_seeds(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw InputError("seed file '" + path.string() + "' not found");
  std::vector<Vec3> pts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    std::istringstream ss(line);
    std::string first;
    if (!(ss >> first))
      continue;
    std::istringstream full(line);
    Vec3 p;
    std::string extra;
    if (!(full >> p.x >> p.y >> p.z) || (full >> extra) || !is_finite(p))
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": expected 'x y z'");
    pts.push_back(p);
  }
  if (pts.size() < 2)
    throw InputError(path.string() + ": at least 2 seed points required, got " + std::to_string(pts.size()));
  return pts;
}

inline void write_seeds(const std::vector<Vec3> &pts, const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out)
    throw InputError("cannot write '" + path.string() + "'");
  out << "# vertebra centers (mm), cranial to caudal\n";
  out.precision(17);
  for (const auto &p : pts)
    out << p.x << ' ' << p.y << ' ' << p.z << '\n';
}

// ---------------------------------------------------------------------------
// Canal centerline

namespace detail {

/// Lumen-weighted centroid (weight = threshold - HU for sub-threshold voxels)
/// of the voxels whose centers fall inside the ball; nullopt when empty.
template <typename T>
std::optional<Vec3> ball_centroid(const Volume<T> &vol, const Vec3 &c, double r, double threshold) {
  const GridGeometry &g = vol.grid();
  const Vec3 lo = g.continuous_index(c - Vec3{r, r, r});
  const Vec3 hi = g.continuous_index(c + Vec3{r, r, r});
  Vec3 acc;
  double wsum = 0.0;
  for (int k = std::max(0, static_cast<int>(std::ceil(lo.z))); k <= std::min(g.nz() - 1, static_cast<int>(std::floor(hi.z))); ++k)
    for (int j = std::max(0, static_cast<int>(std::ceil(lo.y))); j <= std::min(g.ny() - 1, static_cast<int>(std::floor(hi.y))); ++j)
      for (int i = std::max(0, static_cast<int>(std::ceil(lo.x))); i <= std::min(g.nx() - 1, static_cast<int>(std::floor(hi.x))); ++i) {
        const Vec3 p = g.center(i, j, k);
        if (norm2(p - c) > r * r)
          continue;
        const double hu = vol.at(i, j, k);
        if (hu >= threshold)
          continue;
        const double w = threshold - hu;
        acc += p * w;
        wsum += w;
      }
  if (wsum <= 0.0)
    return std::nullopt;
  return acc / wsum;
}

/// Finds the enclosed sub-threshold region in the axial slice through
/// `center`, inside the posterior search window. Regions touching the window
/// border are open tissue, not a canal.
template <typename T>
std::optional<Vec3> find_canal_in_slice(const Volume<T> &vol, const Vec3 &center, const RollingBallParams &prm) {
  const GridGeometry &g = vol.grid();
  const int k = static_cast<int>(std::lround(g.continuous_index(center).z));
  if (k < 0 || k >= g.nz())
    return std::nullopt;
  const Vec3 post = normalized(Vec3{prm.posterior.x, prm.posterior.y, 0.0});
  const Vec3 lat{-post.y, post.x, 0.0};
  const double half_width = prm.search_window / 2;

  // Window = points c + a*post + b*lat with a in [0, W], |b| <= W/2.
  auto in_window = [&](const Vec3 &p) {
    const Vec3 d = p - center;
    const double a = dot(d, post), b = dot(d, lat);
    return a >= 0.0 && a <= prm.search_window && std::abs(b) <= half_width;
  };
  const int nx = g.nx(), ny = g.ny();
  std::vector<int> comp(static_cast<std::size_t>(nx) * ny, -1);
  std::vector<char> lumen(comp.size(), 0), window(comp.size(), 0);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const Vec3 p = g.center(i, j, k);
      const auto idx = static_cast<std::size_t>(i + nx * j);
      window[idx] = in_window(p);
      lumen[idx] = window[idx] && vol.at(i, j, k) < prm.threshold;
    }

  const double min_area = kPi * 0.25 * prm.radius * prm.radius;
  const double pixel_area = g.spacing.x * g.spacing.y;
  std::optional<Vec3> best;
  std::size_t best_size = 0;
  int next = 0;
  for (std::size_t start = 0; start < comp.size(); ++start) {
    if (!lumen[start] || comp[start] >= 0)
      continue;
    std::vector<std::size_t> members{start};
    comp[start] = next;
    bool touches_border = false;
    for (std::size_t q = 0; q < members.size(); ++q) {
      const int i = static_cast<int>(members[q] % nx), j = static_cast<int>(members[q] / nx);
      const int di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
      for (int d = 0; d < 4; ++d) {
        const int a = i + di[d], b = j + dj[d];
        if (a < 0 || b < 0 || a >= nx || b >= ny) {
          touches_border = true;
          continue;
        }
        const auto n = static_cast<std::size_t>(a + nx * b);
        if (!window[n]) {
          touches_border = true;
          continue;
        }
        if (lumen[n] && comp[n] < 0) {
          comp[n] = next;
          members.push_back(n);
        }
      }
    }
    ++next;
    if (touches_border || members.size() * pixel_area < min_area || members.size() <= best_size)
      continue;
    Vec3 c;
    for (auto m : members)
      c += g.center(static_cast<int>(m % nx), static_cast<int>(m / nx), k);
    best = c / static_cast<double>(members.size());
    best_size = members.size();
  }
  return best;
}

} // namespace detail

/// Rolls a ball caudally down the spinal canal, starting from the enclosed
/// lumen found posterior of the most cranial center. At each axial step the
/// ball re-centers (in-plane) on the lumen-weighted centroid of the
/// sub-threshold voxels it covers.
template <typename T>
std::vector<Vec3> detect_canal_centerline(const Volume<T> &vol, const std::vector<Vec3> &centers,
                                          const RollingBallParams &prm = {}) {
  if (centers.size() < 2)
    throw InputError("canal detection needs at least 2 centers");
  double z_top = -std::numeric_limits<double>::infinity(), z_bottom = std::numeric_limits<double>::infinity();
  const Vec3 *top = &centers.front();
  for (const auto &c : centers) {
    if (c.z > z_top) {
      z_top = c.z;
      top = &c;
    }
    z_bottom = std::min(z_bottom, c.z);
  }

  const auto start = detail::find_canal_in_slice(vol, *top, prm);
  if (!start)
    throw PipelineError("canal detection: no enclosed sub-threshold region posterior of the cranial center");

  auto recenter = [&](Vec3 p) {
    for (int it = 0; it < prm.recenter_iterations; ++it) {
      const auto c = detail::ball_centroid(vol, p, prm.radius, prm.threshold);
      if (!c)
        return std::optional<Vec3>{};
      const Vec3 next{c->x, c->y, p.z};
      const double moved = distance(next, p);
      p = next;
      if (moved < 1e-3)
        break;
    }
    return std::optional<Vec3>{p};
  };

  std::vector<Vec3> line;
  auto first = recenter(*start);
  if (!first)
    throw PipelineError("canal detection: ball found no lumen at the start position");
  line.push_back(*first);
  // Strictly decreasing z from the cranial to the caudal center (inclusive).
  for (double z = z_top - prm.step;; z -= prm.step) {
    const bool last = z <= z_bottom;
    if (last)
      z = z_bottom;
    // No extrapolation: where the canal is open (disk gaps, below the arch)
    // the ball sees no walls and any carried drift would compound.
    Vec3 guess = line.back();
    guess.z = z;
    const auto p = recenter(guess);
    if (!p)
      throw PipelineError("canal detection: lost the canal at z = " + std::to_string(z));
    if (p->z < line.back().z)
      line.push_back(*p);
    if (last)
      break;
  }
  return line;
}

/// Minimum distance from `p` to a polyline.
inline double distance_to_polyline(const Vec3 &p, const std::vector<Vec3> &line) {
  if (line.empty())
    return std::numeric_limits<double>::infinity();
  if (line.size() == 1)
    return distance(p, line.front());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < line.size(); ++i)
    best = std::min(best, distance(p, closest_point_on_segment(p, line[i], line[i + 1])));
  return best;
}

// ---------------------------------------------------------------------------
// Disk planes

namespace detail {

template <typename T>
double slab_bone_mass(const Volume<T> &vol, const Vec3 &a, const Vec3 &b, double t, const PlaneFitParams &prm) {
  const Vec3 dir = normalized(b - a);
  const Vec3 q = a + (b - a) * t;
  const GridGeometry &g = vol.grid();
  const double reach = prm.slab_radius + prm.slab;
  const Vec3 lo = g.continuous_index(q - Vec3{reach, reach, reach});
  const Vec3 hi = g.continuous_index(q + Vec3{reach, reach, reach});
  double sum = 0.0;
  for (int k = std::max(0, static_cast<int>(std::ceil(lo.z))); k <= std::min(g.nz() - 1, static_cast<int>(std::floor(hi.z))); ++k)
    for (int j = std::max(0, static_cast<int>(std::ceil(lo.y))); j <= std::min(g.ny() - 1, static_cast<int>(std::floor(hi.y))); ++j)
      for (int i = std::max(0, static_cast<int>(std::ceil(lo.x))); i <= std::min(g.nx() - 1, static_cast<int>(std::floor(hi.x))); ++i) {
        const double hu = vol.at(i, j, k);
        if (hu <= prm.bone_threshold)
          continue;
        const Vec3 d = g.center(i, j, k) - q;
        const double along = dot(d, dir);
        if (std::abs(along) > prm.slab / 2)
          continue;
        if (norm2(d - dir * along) > prm.slab_radius * prm.slab_radius)
          continue;
        sum += hu;
      }
  return sum;
}

} // namespace detail

/// One plane per consecutive center pair, perpendicular to the center-to-center
/// direction (normal pointing caudally), placed where a thin slab holds the
/// least bone. The minimum is bracketed on a coarse scan, the extent of the
/// minimal plateau is located by golden-section search on each side, and the
/// plane goes to the plateau middle. A flat objective yields the midpoint.
template <typename T>
std::vector<Plane> fit_disk_planes(const Volume<T> &vol, const std::vector<Vec3> &centers,
                                   const PlaneFitParams &prm = {}) {
  std::vector<Plane> planes;
  for (std::size_t n = 0; n + 1 < centers.size(); ++n) {
    const Vec3 a = centers[n], b = centers[n + 1];
    const double len = distance(a, b);
    if (len <= 0.0)
      throw InputError("fit_disk_planes: consecutive centers coincide");
    auto f = [&](double t) { return detail::slab_bone_mass(vol, a, b, t, prm); };

    const int samples = std::max(9, static_cast<int>(std::ceil((prm.t_max - prm.t_min) * len / 0.5)) + 1);
    std::vector<double> ts(static_cast<std::size_t>(samples)), fs(ts.size());
    for (int i = 0; i < samples; ++i) {
      ts[static_cast<std::size_t>(i)] = prm.t_min + (prm.t_max - prm.t_min) * i / (samples - 1);
      fs[static_cast<std::size_t>(i)] = f(ts[static_cast<std::size_t>(i)]);
    }
    const double fmin = *std::min_element(fs.begin(), fs.end());
    const double fmax = *std::max_element(fs.begin(), fs.end());
    double t_best = 0.5;
    if (fmax - fmin > 1e-9 * std::max(1.0, std::abs(fmax))) {
      const double level = fmin + 0.02 * (fmax - fmin);
      auto below = [&](double t) { return f(t) <= level; };
      // Longest run of samples at the plateau level.
      int best_lo = -1, best_hi = -1, cur_lo = -1;
      for (int i = 0; i <= samples; ++i) {
        const bool in = i < samples && fs[static_cast<std::size_t>(i)] <= level;
        if (in && cur_lo < 0)
          cur_lo = i;
        if (!in && cur_lo >= 0) {
          if (best_lo < 0 || i - 1 - cur_lo > best_hi - best_lo) {
            best_lo = cur_lo;
            best_hi = i - 1;
          }
          cur_lo = -1;
        }
      }
      // Golden-section bisection of the plateau boundary between an inside and
      // an outside sample.
      auto boundary = [&](double inside, double outside) {
        constexpr double kGolden = 0.6180339887498949;
        for (int it = 0; it < 40 && std::abs(outside - inside) * len > 1e-3; ++it) {
          const double probe = outside + (inside - outside) * kGolden;
          if (below(probe))
            inside = probe;
          else
            outside = probe;
        }
        return inside;
      };
      const double lo = best_lo > 0 ? boundary(ts[static_cast<std::size_t>(best_lo)], ts[static_cast<std::size_t>(best_lo - 1)])
                                    : ts.front();
      const double hi = best_hi + 1 < samples
                            ? boundary(ts[static_cast<std::size_t>(best_hi)], ts[static_cast<std::size_t>(best_hi + 1)])
                            : ts.back();
      t_best = 0.5 * (lo + hi);
    }
    planes.push_back({a + (b - a) * t_best, (b - a) / len});
  }
  return planes;
}

// ---------------------------------------------------------------------------
// Cylinders

/// Local spine direction at center `i` (cranial orientation).
inline Vec3 spine_direction(const std::vector<Vec3> &centers, std::size_t i) {
  const std::size_t lo = i == 0 ? 0 : i - 1;
  const std::size_t hi = i + 1 < centers.size() ? i + 1 : i;
  Vec3 d = normalized(centers[lo] - centers[hi]);
  return d;
}

/// radius = distance(center, canal) - margin; fails if that drops below r_min.
inline std::vector<Cylinder> build_cylinders(const std::vector<Vec3> &centers, const std::vector<Plane> &disk_planes,
                                             const std::vector<Vec3> &canal, const CylinderParams &prm = {}) {
  if (centers.size() < 2 || disk_planes.size() + 1 != centers.size())
    throw InputError("build_cylinders: need n >= 2 centers and n-1 disk planes");
  if (canal.empty())
    throw InputError("build_cylinders: empty canal centerline");
  std::vector<Cylinder> out;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    Cylinder c;
    c.base = centers[i];
    c.axis = spine_direction(centers, i);
    c.radius = distance_to_polyline(centers[i], canal) - prm.margin;
    if (c.radius < prm.r_min)
      throw PipelineError("cylinder for vertebra " + std::to_string(i + 1) + ": radius " + std::to_string(c.radius) +
                          " mm below r_min " + std::to_string(prm.r_min) + " mm (inconsistent landmarks)");
    // Disk-plane normals point caudally, i.e. out of the cranial vertebra.
    if (i > 0)
      c.cranial_cap = Plane{disk_planes[i - 1].point, -disk_planes[i - 1].normal};
    if (i + 1 < centers.size())
      c.caudal_cap = disk_planes[i];
    if (!c.contains(c.base))
      throw PipelineError("cylinder for vertebra " + std::to_string(i + 1) + " does not contain its center");
    out.push_back(c);
  }
  return out;
}

/// Index box of voxels inside the cylinder, grown by `pad` voxels and clipped
/// to the grid. Empty when no voxel center is inside.
inline IndexBox cylinder_bounds(const GridGeometry &g, const Cylinder &c, int pad) {
  // Conservative axial range [t_lo, t_hi] along the axis from the caps, then
  // the bounding box of that finite cylinder, then an exact scan inside it.
  const Vec3 ext = g.extent();
  const double diag = norm(ext) + norm(c.base - g.origin) + c.radius;
  double t_lo = -diag, t_hi = diag;
  auto limit = [&](const Plane &cap) {
    const double na = dot(cap.normal, c.axis);
    if (std::abs(na) < 1e-6)
      return;
    const double sin_t = std::sqrt(std::max(0.0, 1.0 - na * na));
    const double bound = (dot(cap.normal, cap.point - c.base) + c.radius * sin_t) / na;
    if (na > 0)
      t_hi = std::min(t_hi, bound);
    else
      t_lo = std::max(t_lo, bound);
  };
  if (c.cranial_cap)
    limit(*c.cranial_cap);
  if (c.caudal_cap)
    limit(*c.caudal_cap);

  int lo_idx[3], hi_idx[3];
  for (int e = 0; e < 3; ++e) {
    const double a0 = c.base[e] + c.axis[e] * t_lo, a1 = c.base[e] + c.axis[e] * t_hi;
    const double spread = c.radius * std::sqrt(std::max(0.0, 1.0 - c.axis[e] * c.axis[e]));
    const double pmin = std::min(a0, a1) - spread, pmax = std::max(a0, a1) + spread;
    lo_idx[e] = std::max(0, static_cast<int>(std::floor((pmin - g.origin[e]) / g.spacing[e] - 0.5)) - 1);
    hi_idx[e] = std::min(g.dims[e] - 1, static_cast<int>(std::ceil((pmax - g.origin[e]) / g.spacing[e] - 0.5)) + 1);
  }

  Index3 lo{g.nx(), g.ny(), g.nz()}, hi{-1, -1, -1};
  for (int k = lo_idx[2]; k <= hi_idx[2]; ++k)
    for (int j = lo_idx[1]; j <= hi_idx[1]; ++j)
      for (int i = lo_idx[0]; i <= hi_idx[0]; ++i) {
        if (!c.contains(g.center(i, j, k)))
          continue;
        lo = {std::min(lo.i, i), std::min(lo.j, j), std::min(lo.k, k)};
        hi = {std::max(hi.i, i), std::max(hi.j, j), std::max(hi.k, k)};
      }
  if (hi.i < 0)
    return {{0, 0, 0}, {0, 0, 0}};
  return {{std::max(0, lo.i - pad), std::max(0, lo.j - pad), std::max(0, lo.k - pad)},
          {std::min(g.nx(), hi.i + pad + 1), std::min(g.ny(), hi.j + pad + 1), std::min(g.nz(), hi.k + pad + 1)}};
}

/// Voxel mask of the cylinder on `g`.
inline LabelMask cylinder_mask(const GridGeometry &g, const Cylinder &c) {
  LabelMask m(g, 0);
  for (int k = 0; k < g.nz(); ++k)
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i)
        if (c.contains(g.center(i, j, k)))
          m.at(i, j, k) = 1;
  return m;
}

} // namespace qct
