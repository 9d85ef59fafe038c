// Binary morphology on voxel masks and the voxel-level refinement steps:
// seeded volume growing, closing and hole filling, body/process separation
// by erosion residuals and competing dilations, trabecular peeling.
//
// Masks are treated as binary (non-zero = foreground). Voxels outside the
// grid count as background.
#pragma once

#include "errors.hpp"
#include "geometry.hpp"
#include "landmarks.hpp"
#include "volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace qct {

struct StructuringElement {
  enum class Kind { n6, n18, n26, ball };
  Kind kind = Kind::n6;
  double radius = 0.0; ///< mm, ball only

  static StructuringElement n6() { return {Kind::n6, 0.0}; }
  static StructuringElement n18() { return {Kind::n18, 0.0}; }
  static StructuringElement n26() { return {Kind::n26, 0.0}; }
  static StructuringElement ball(double r) {
    if (!(r > 0.0))
      throw ConfigError("morph.ball_radius", "ball radius must be > 0");
    return {Kind::ball, r};
  }

  /// Offsets of the element on a grid (origin included).
  std::vector<Index3> offsets(const GridGeometry &g) const {
    std::vector<Index3> out;
    if (kind == Kind::ball) {
      const int ri = static_cast<int>(std::floor(radius / g.spacing.x));
      const int rj = static_cast<int>(std::floor(radius / g.spacing.y));
      const int rk = static_cast<int>(std::floor(radius / g.spacing.z));
      for (int k = -rk; k <= rk; ++k)
        for (int j = -rj; j <= rj; ++j)
          for (int i = -ri; i <= ri; ++i) {
            const double d2 = std::pow(i * g.spacing.x, 2) + std::pow(j * g.spacing.y, 2) + std::pow(k * g.spacing.z, 2);
            if (d2 <= radius * radius + 1e-12)
              out.push_back({i, j, k});
          }
      return out;
    }
    const int max_nonzero = kind == Kind::n6 ? 1 : (kind == Kind::n18 ? 2 : 3);
    for (int k = -1; k <= 1; ++k)
      for (int j = -1; j <= 1; ++j)
        for (int i = -1; i <= 1; ++i)
          if (std::abs(i) + std::abs(j) + std::abs(k) <= max_nonzero)
            out.push_back({i, j, k});
    return out;
  }

  /// Point reflection; all elements here are symmetric, so this is the identity.
  StructuringElement reflected() const { return *this; }
};

/// Neighbour offsets (origin excluded) for 6/18/26 connectivity.
inline std::vector<Index3> neighbor_offsets(int connectivity) {
  StructuringElement se = connectivity == 6    ? StructuringElement::n6()
                          : connectivity == 18 ? StructuringElement::n18()
                          : connectivity == 26 ? StructuringElement::n26()
                                               : throw ConfigError("morph.connectivity", "must be 6, 18 or 26");
  auto o = se.offsets(GridGeometry{});
  o.erase(std::remove(o.begin(), o.end(), Index3{0, 0, 0}), o.end());
  return o;
}

inline LabelMask complement(const LabelMask &m) {
  LabelMask out(m.grid(), 0);
  for (std::size_t i = 0; i < m.size(); ++i)
    out[i] = m[i] ? 0 : 1;
  return out;
}

inline LabelMask binarize(const LabelMask &m) {
  LabelMask out(m.grid(), 0);
  for (std::size_t i = 0; i < m.size(); ++i)
    out[i] = m[i] ? 1 : 0;
  return out;
}

/// Voxel kept iff every element offset lands on foreground.
inline LabelMask erode(const LabelMask &m, const StructuringElement &se) {
  const GridGeometry &g = m.grid();
  const auto offs = se.offsets(g);
  LabelMask out(g, 0);
  for (int k = 0; k < g.nz(); ++k)
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i) {
        if (!m.at(i, j, k))
          continue;
        bool keep = true;
        for (const auto &o : offs) {
          const int a = i + o.i, b = j + o.j, c = k + o.k;
          if (!g.contains(a, b, c) || !m.at(a, b, c)) {
            keep = false;
            break;
          }
        }
        out.at(i, j, k) = keep ? 1 : 0;
      }
  return out;
}

/// Voxel set iff some reflected element offset lands on foreground.
inline LabelMask dilate(const LabelMask &m, const StructuringElement &se) {
  const GridGeometry &g = m.grid();
  const auto offs = se.reflected().offsets(g);
  LabelMask out(g, 0);
  for (int k = 0; k < g.nz(); ++k)
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i) {
        if (!m.at(i, j, k))
          continue;
        for (const auto &o : offs) {
          const int a = i + o.i, b = j + o.j, c = k + o.k;
          if (g.contains(a, b, c))
            out.at(a, b, c) = 1;
        }
      }
  return out;
}

/// Dilation followed by erosion with the same element.
inline LabelMask close_mask(const LabelMask &m, const StructuringElement &se) { return erode(dilate(m, se), se); }

inline LabelMask open_mask(const LabelMask &m, const StructuringElement &se) { return dilate(erode(m, se), se); }

/// Complement of the background component 6-connected to the grid boundary.
inline LabelMask fill_holes(const LabelMask &m) {
  const GridGeometry &g = m.grid();
  std::vector<std::uint8_t> outside(m.size(), 0);
  std::vector<std::size_t> queue;
  auto push = [&](int i, int j, int k) {
    const std::size_t idx = g.linear(i, j, k);
    if (!m[idx] && !outside[idx]) {
      outside[idx] = 1;
      queue.push_back(idx);
    }
  };
  for (int k = 0; k < g.nz(); ++k)
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i)
        if (i == 0 || j == 0 || k == 0 || i == g.nx() - 1 || j == g.ny() - 1 || k == g.nz() - 1)
          push(i, j, k);
  const auto offs = neighbor_offsets(6);
  for (std::size_t q = 0; q < queue.size(); ++q) {
    const Index3 v = g.unravel(queue[q]);
    for (const auto &o : offs)
      if (g.contains(v.i + o.i, v.j + o.j, v.k + o.k))
        push(v.i + o.i, v.j + o.j, v.k + o.k);
  }
  LabelMask out(g, 0);
  for (std::size_t i = 0; i < m.size(); ++i)
    out[i] = outside[i] ? 0 : 1;
  return out;
}

struct Components {
  std::vector<int> label; ///< -1 background, else component id
  std::vector<std::size_t> sizes;
  std::size_t count() const { return sizes.size(); }
};

/// Connected components, numbered in order of their first voxel (x-fastest).
inline Components connected_components(const LabelMask &m, int connectivity) {
  const GridGeometry &g = m.grid();
  const auto offs = neighbor_offsets(connectivity);
  Components c;
  c.label.assign(m.size(), -1);
  std::vector<std::size_t> queue;
  for (std::size_t start = 0; start < m.size(); ++start) {
    if (!m[start] || c.label[start] >= 0)
      continue;
    const int id = static_cast<int>(c.sizes.size());
    queue.assign(1, start);
    c.label[start] = id;
    for (std::size_t q = 0; q < queue.size(); ++q) {
      const Index3 v = g.unravel(queue[q]);
      for (const auto &o : offs) {
        const int a = v.i + o.i, b = v.j + o.j, d = v.k + o.k;
        if (!g.contains(a, b, d))
          continue;
        const std::size_t n = g.linear(a, b, d);
        if (m[n] && c.label[n] < 0) {
          c.label[n] = id;
          queue.push_back(n);
        }
      }
    }
    c.sizes.push_back(queue.size());
  }
  return c;
}

// ---------------------------------------------------------------------------

/// Linear indices of surface voxels whose HU reaches `threshold`.
template <typename T>
std::vector<std::size_t> select_seeds(const Volume<T> &vol, const LabelMask &surface, double threshold) {
  if (!(vol.grid() == surface.grid()))
    throw InputError("select_seeds: surface mask grid differs from the volume grid");
  std::vector<std::size_t> seeds;
  for (std::size_t i = 0; i < surface.size(); ++i)
    if (surface[i] && static_cast<double>(vol[i]) >= threshold)
      seeds.push_back(i);
  if (seeds.empty())
    throw PipelineError("select_seeds: no balloon surface voxel reaches " + std::to_string(threshold) + " HU");
  return seeds;
}

/// Component of {HU >= threshold} (restricted to `region` when given)
/// reachable from the seeds.
template <typename T>
LabelMask volume_grow(const Volume<T> &vol, const std::vector<std::size_t> &seeds, double threshold, int connectivity,
                      const LabelMask *region = nullptr) {
  const GridGeometry &g = vol.grid();
  const auto offs = neighbor_offsets(connectivity);
  LabelMask out(g, 0);
  auto admissible = [&](std::size_t idx) {
    return static_cast<double>(vol[idx]) >= threshold && (!region || (*region)[idx]);
  };
  std::vector<std::size_t> queue;
  for (auto s : seeds)
    if (s < out.size() && admissible(s) && !out[s]) {
      out[s] = 1;
      queue.push_back(s);
    }
  for (std::size_t q = 0; q < queue.size(); ++q) {
    const Index3 v = g.unravel(queue[q]);
    for (const auto &o : offs) {
      const int a = v.i + o.i, b = v.j + o.j, c = v.k + o.k;
      if (!g.contains(a, b, c))
        continue;
      const std::size_t n = g.linear(a, b, c);
      if (!out[n] && admissible(n)) {
        out[n] = 1;
        queue.push_back(n);
      }
    }
  }
  return out;
}

struct Separation {
  LabelMask body;
  LabelMask processes;
  int erosions = 0; ///< erosion steps needed before the residuals split
};

/// Splits a vertebra mask into body and processes.
///
/// The mask is eroded until it falls apart into at least two 26-connected
/// residuals; the largest is the body seed (ties: centroid closer to the
/// cylinder axis, when one is given), the others seed the processes. Both
/// labels then dilate in lockstep inside the original mask, never claiming
/// the same voxel: a voxel reached by both labels in the same round goes to
/// the label whose residual is nearer (body on exact ties).
inline Separation separate_processes(const LabelMask &mask, const StructuringElement &se,
                                     const Cylinder *cylinder = nullptr) {
  const GridGeometry &g = mask.grid();
  LabelMask residual = binarize(mask);
  Components comps;
  int erosions = 0;
  for (;;) {
    comps = connected_components(residual, 26);
    if (comps.count() >= 2)
      break;
    if (comps.count() == 0)
      throw PipelineError("separate_processes: mask vanished before splitting (no thin bridge)");
    residual = erode(residual, se);
    ++erosions;
  }

  std::vector<Vec3> centroid(comps.count());
  for (std::size_t i = 0; i < residual.size(); ++i)
    if (comps.label[i] >= 0)
      centroid[static_cast<std::size_t>(comps.label[i])] += g.center(g.unravel(i));
  std::size_t body_id = 0;
  auto axis_distance = [&](std::size_t id) {
    const Vec3 c = centroid[id] / static_cast<double>(comps.sizes[id]);
    return cylinder ? cylinder->radial_distance(c) : 0.0;
  };
  for (std::size_t id = 1; id < comps.count(); ++id) {
    if (comps.sizes[id] > comps.sizes[body_id] ||
        (comps.sizes[id] == comps.sizes[body_id] && axis_distance(id) < axis_distance(body_id)))
      body_id = id;
  }

  // label: 0 unclaimed, 1 body, 2 processes.
  std::vector<std::uint8_t> label(mask.size(), 0);
  std::vector<std::size_t> frontier[2];
  std::vector<Vec3> residual_pts[2];
  for (std::size_t i = 0; i < residual.size(); ++i) {
    if (comps.label[i] < 0)
      continue;
    const int l = static_cast<std::size_t>(comps.label[i]) == body_id ? 1 : 2;
    label[i] = static_cast<std::uint8_t>(l);
    frontier[l - 1].push_back(i);
  }
  // Residual boundary voxels are enough for nearest-residual distances.
  const auto n6 = neighbor_offsets(6);
  for (std::size_t i = 0; i < residual.size(); ++i) {
    if (!label[i])
      continue;
    const Index3 v = g.unravel(i);
    for (const auto &o : n6) {
      const int a = v.i + o.i, b = v.j + o.j, c = v.k + o.k;
      if (!g.contains(a, b, c) || !residual.at(a, b, c)) {
        residual_pts[label[i] - 1].push_back(g.center(v));
        break;
      }
    }
  }
  auto nearest = [&](std::size_t idx) {
    const Vec3 p = g.center(g.unravel(idx));
    double best[2] = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    for (int l = 0; l < 2; ++l)
      for (const auto &q : residual_pts[l])
        best[l] = std::min(best[l], norm2(p - q));
    return best[1] < best[0] ? 2 : 1;
  };

  auto offs = se.reflected().offsets(g);
  offs.erase(std::remove(offs.begin(), offs.end(), Index3{0, 0, 0}), offs.end());
  std::vector<std::uint8_t> reached(mask.size(), 0); // bit 0: body, bit 1: processes
  std::vector<std::size_t> touched;
  for (;;) {
    touched.clear();
    for (int l = 0; l < 2; ++l)
      for (std::size_t idx : frontier[l]) {
        const Index3 v = g.unravel(idx);
        for (const auto &o : offs) {
          const int a = v.i + o.i, b = v.j + o.j, c = v.k + o.k;
          if (!g.contains(a, b, c))
            continue;
          const std::size_t n = g.linear(a, b, c);
          if (!mask[n] || label[n])
            continue;
          if (!reached[n])
            touched.push_back(n);
          reached[n] |= static_cast<std::uint8_t>(1 << l);
        }
      }
    if (touched.empty())
      break;
    std::sort(touched.begin(), touched.end());
    frontier[0].clear();
    frontier[1].clear();
    for (std::size_t n : touched) {
      const int l = reached[n] == 3 ? nearest(n) : (reached[n] == 1 ? 1 : 2);
      label[n] = static_cast<std::uint8_t>(l);
      reached[n] = 0;
      frontier[l - 1].push_back(n);
    }
  }
  // Mask parts no residual could reach (pieces that vanished entirely).
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i] && !label[i])
      label[i] = static_cast<std::uint8_t>(nearest(i));

  Separation s{LabelMask(g, 0), LabelMask(g, 0), erosions};
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (label[i] == 1)
      s.body[i] = 1;
    else if (label[i] == 2)
      s.processes[i] = 1;
  }
  return s;
}

/// Number of homogeneous 6-neighbourhood erosion steps for a peel depth.
inline int peel_steps(double peel_mm, double min_spacing) {
  if (peel_mm <= 0.0)
    return 0;
  return static_cast<int>(std::ceil(peel_mm / min_spacing - 1e-9));
}

/// Trabecular compartment of a body mask: repeatedly strip boundary voxels at
/// or above the cortical threshold until none is left on the boundary, then
/// erode homogeneously by peel_steps(peel_mm) steps.
template <typename T>
LabelMask trabecular_compartment(const Volume<T> &vol, const LabelMask &body, double cortical_threshold, double peel_mm) {
  const GridGeometry &g = vol.grid();
  if (!(g == body.grid()))
    throw InputError("trabecular_compartment: mask grid differs from the volume grid");
  LabelMask m = binarize(body);
  if (count_nonzero(m) == 0)
    throw PipelineError("trabecular_compartment: empty body mask");
  const auto n6 = neighbor_offsets(6);
  auto on_boundary = [&](std::size_t idx) {
    const Index3 v = g.unravel(idx);
    for (const auto &o : n6) {
      const int a = v.i + o.i, b = v.j + o.j, c = v.k + o.k;
      if (!g.contains(a, b, c) || !m.at(a, b, c))
        return true;
    }
    return false;
  };
  auto bright = [&](std::size_t idx) { return static_cast<double>(vol[idx]) >= cortical_threshold; };

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i] && bright(i) && on_boundary(i))
      candidates.push_back(i);
  std::vector<std::uint8_t> queued(m.size(), 0);
  while (!candidates.empty()) {
    // Remove the whole current layer at once, then look at its neighbours.
    for (auto idx : candidates)
      m[idx] = 0;
    std::vector<std::size_t> next;
    for (auto idx : candidates) {
      const Index3 v = g.unravel(idx);
      for (const auto &o : n6) {
        const int a = v.i + o.i, b = v.j + o.j, c = v.k + o.k;
        if (!g.contains(a, b, c))
          continue;
        const std::size_t n = g.linear(a, b, c);
        if (m[n] && !queued[n] && bright(n)) {
          queued[n] = 1;
          next.push_back(n);
        }
      }
    }
    for (auto n : next)
      queued[n] = 0;
    std::sort(next.begin(), next.end());
    candidates = std::move(next);
  }

  const int steps = peel_steps(peel_mm, g.min_spacing());
  for (int s = 0; s < steps; ++s)
    m = erode(m, StructuringElement::n6());
  if (count_nonzero(m) == 0)
    throw PipelineError("trabecular_compartment: nothing left after peeling");
  return m;
}

} // namespace qct
