// Explicit deformable balloon.
//
// Each vertex obeys m * p'' = f_smg + f_img, integrated with semi-implicit
// Euler and velocity damping:
//
//   a = (f_smg + f_img) / m
//   v <- (v + dt * a) * (1 - damping)
//   p <- p + dt * v,  then p is clamped into the vertebra's cylinder
//
// f_smg is the umbrella (1-ring centroid) smoothing force. f_img is read off a
// radial intensity profile along the vertex normal: the strongest
// bright-to-dark transition attracts the vertex; without one the balloon
// inflates with constant pressure.
#pragma once

#include "errors.hpp"
#include "geometry.hpp"
#include "landmarks.hpp"
#include "mesh.hpp"
#include "volume.hpp"

#include <cmath>
#include <optional>
#include <vector>

namespace qct {

struct BalloonParams {
  double mass = 1.0;
  double damping = 0.35; ///< gamma in (0, 1)
  double dt = 0.1;
  double k_smooth = 8.0;
  double k_image = 2.0;
  double k_pressure = 4.0;
  double profile_out = 6.0; ///< mm outward along the normal
  double profile_in = 2.0;  ///< mm inward
  double profile_step = 0.3;
  double min_gradient = 40.0;  ///< HU/mm
  double max_edge_length = 0.0; ///< mm; 0 = 2 * max voxel spacing
  double epsilon = 0.01;        ///< convergence threshold on max displacement, mm
  int patience = 10;
  int max_iterations = 800;
  int refine_every = 25;
  double init_radius = 4.0; ///< mm (r_min / 2 by default)
  int init_subdivisions = 2;

  void validate() const {
    auto nonneg = [](double v, const char *key) {
      if (!(v >= 0.0) || !std::isfinite(v))
        throw ConfigError(std::string("balloon.") + key, "must be >= 0");
    };
    auto pos = [](double v, const char *key) {
      if (!(v > 0.0) || !std::isfinite(v))
        throw ConfigError(std::string("balloon.") + key, "must be > 0");
    };
    pos(mass, "mass");
    if (!(damping > 0.0 && damping < 1.0))
      throw ConfigError("balloon.damping", "must lie in (0, 1)");
    pos(dt, "dt");
    nonneg(k_smooth, "k_smooth");
    nonneg(k_image, "k_image");
    nonneg(k_pressure, "k_pressure");
    nonneg(profile_out, "profile_out");
    nonneg(profile_in, "profile_in");
    pos(profile_step, "profile_step");
    nonneg(min_gradient, "min_gradient");
    nonneg(max_edge_length, "max_edge_length");
    pos(epsilon, "epsilon");
    if (patience < 1)
      throw ConfigError("balloon.patience", "must be >= 1");
    if (max_iterations < 1)
      throw ConfigError("balloon.max_iterations", "must be >= 1");
    if (refine_every < 1)
      throw ConfigError("balloon.refine_every", "must be >= 1");
    pos(init_radius, "init_radius");
    if (init_subdivisions < 0 || init_subdivisions > 6)
      throw ConfigError("balloon.init_subdivisions", "must lie in [0, 6]");
  }
};

/// k_smooth * (centroid of the one-ring - p).
inline Vec3 internal_force(const TriangleMesh &mesh, const std::vector<int> &ring, std::size_t vertex, double k_smooth) {
  if (ring.empty())
    return {};
  Vec3 c;
  for (int n : ring)
    c += mesh.positions[static_cast<std::size_t>(n)];
  c = c / static_cast<double>(ring.size());
  return (c - mesh.positions[vertex]) * k_smooth;
}

inline Vec3 internal_force(const TriangleMesh &mesh, std::size_t vertex, double k_smooth) {
  const auto rings = vertex_neighbors(mesh);
  return internal_force(mesh, rings[vertex], vertex, k_smooth);
}

/// Signed offset (mm along the normal) of the strongest qualifying
/// bright-to-dark edge on the profile through `p`, or nullopt.
///
/// Samples run from -profile_in to +profile_out. The strongest negative
/// finite difference wins, ties going to the smallest |t|. The position is
/// then refined to the gradient-weighted centroid of the contiguous run of
/// qualifying differences around it, which locates a blurred edge at its
/// middle instead of its first sample.
template <typename T>
std::optional<double> find_profile_edge(const Volume<T> &vol, const Vec3 &p, const Vec3 &n, const BalloonParams &prm) {
  const double step = prm.profile_step;
  const int count = static_cast<int>(std::lround((prm.profile_in + prm.profile_out) / step));
  if (count < 1)
    return std::nullopt;
  thread_local std::vector<double> samples;
  samples.resize(static_cast<std::size_t>(count) + 1);
  for (int k = 0; k <= count; ++k)
    samples[static_cast<std::size_t>(k)] = sample_trilinear(vol, p + n * (-prm.profile_in + k * step));

  int best = -1;
  double best_d = 0.0, best_abs_t = 0.0;
  for (int k = 0; k < count; ++k) {
    const double d = (samples[static_cast<std::size_t>(k) + 1] - samples[static_cast<std::size_t>(k)]) / step;
    if (-d < prm.min_gradient)
      continue;
    const double t = -prm.profile_in + (k + 0.5) * step;
    const double tol = 1e-9 * std::max(1.0, std::abs(best_d));
    if (best < 0 || d < best_d - tol || (std::abs(d - best_d) <= tol && std::abs(t) < best_abs_t)) {
      best = k;
      best_d = d;
      best_abs_t = std::abs(t);
    }
  }
  if (best < 0)
    return std::nullopt;

  auto diff = [&](int k) {
    return (samples[static_cast<std::size_t>(k) + 1] - samples[static_cast<std::size_t>(k)]) / step;
  };
  int lo = best, hi = best;
  while (lo > 0 && -diff(lo - 1) >= prm.min_gradient)
    --lo;
  while (hi + 1 < count && -diff(hi + 1) >= prm.min_gradient)
    ++hi;
  double wsum = 0.0, tsum = 0.0;
  for (int k = lo; k <= hi; ++k) {
    const double w = -diff(k);
    wsum += w;
    tsum += w * (-prm.profile_in + (k + 0.5) * step);
  }
  return tsum / wsum;
}

/// Image force for a vertex at `p` with unit outward normal `n`.
template <typename T>
Vec3 image_force_at(const Volume<T> &vol, const Vec3 &p, const Vec3 &n, const BalloonParams &prm) {
  if (const auto t = find_profile_edge(vol, p, n, prm))
    return n * (prm.k_image * *t);
  return n * prm.k_pressure;
}

template <typename T>
Vec3 image_force(const Volume<T> &vol, const TriangleMesh &mesh, std::size_t vertex, const BalloonParams &prm) {
  Vec3 n;
  for (const auto &f : mesh.faces)
    if (f[0] == static_cast<int>(vertex) || f[1] == static_cast<int>(vertex) || f[2] == static_cast<int>(vertex))
      n += face_normal_area2(mesh, f);
  return image_force_at(vol, mesh.positions[vertex], normalized(n), prm);
}

/// Advances every vertex by one time step using forces evaluated on the
/// frozen input state. Vertices leaving `cylinder` are clamped back and lose
/// their velocity. Returns the largest vertex displacement.
template <typename T>
double step_dynamics(TriangleMesh &mesh, const Volume<T> &vol, const Cylinder *cylinder, const BalloonParams &prm,
                     const std::vector<std::vector<int>> *rings = nullptr) {
  std::vector<std::vector<int>> own_rings;
  if (!rings) {
    own_rings = vertex_neighbors(mesh);
    rings = &own_rings;
  }
  const std::size_t nv = mesh.vertex_count();
  mesh.velocities.resize(nv);
  const auto normals = vertex_normals(mesh);
  std::vector<Vec3> force(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    force[v] = internal_force(mesh, (*rings)[v], v, prm.k_smooth) + image_force_at(vol, mesh.positions[v], normals[v], prm);
    if (!is_finite(force[v]))
      throw PipelineError("balloon: non-finite force at vertex " + std::to_string(v));
  }
  double max_disp = 0.0;
  for (std::size_t v = 0; v < nv; ++v) {
    const Vec3 a = force[v] / prm.mass;
    Vec3 vel = (mesh.velocities[v] + a * prm.dt) * (1.0 - prm.damping);
    Vec3 p = mesh.positions[v] + vel * prm.dt;
    if (cylinder) {
      const Vec3 q = cylinder->clamp(p);
      if (!(q == p)) {
        p = q;
        vel = {};
      }
    }
    max_disp = std::max(max_disp, distance(p, mesh.positions[v]));
    mesh.positions[v] = p;
    mesh.velocities[v] = vel;
  }
  return max_disp;
}

struct BalloonResult {
  TriangleMesh mesh;
  bool converged = false;
  int iterations = 0;
  double last_displacement = 0.0;
};

/// Inflates a small icosphere from `start` until the largest displacement
/// stays below epsilon for `patience` consecutive steps, refining stretched
/// edges every `refine_every` steps. Hitting the iteration cap returns the
/// current mesh with `converged == false`.
template <typename T>
BalloonResult run_balloon(const Volume<T> &vol, const Vec3 &start, const Cylinder *cylinder, const BalloonParams &prm) {
  prm.validate();
  const double max_edge = prm.max_edge_length > 0.0 ? prm.max_edge_length : 2.0 * vol.grid().max_spacing();
  BalloonResult r;
  r.mesh = make_icosphere(start, prm.init_radius, prm.init_subdivisions);
  if (cylinder)
    for (auto &p : r.mesh.positions)
      p = cylinder->clamp(p);
  r.mesh = refine_mesh(std::move(r.mesh), max_edge);
  auto rings = vertex_neighbors(r.mesh);
  int calm = 0;
  for (int it = 1; it <= prm.max_iterations; ++it) {
    r.last_displacement = step_dynamics(r.mesh, vol, cylinder, prm, &rings);
    r.iterations = it;
    calm = r.last_displacement < prm.epsilon ? calm + 1 : 0;
    if (calm >= prm.patience) {
      r.converged = true;
      break;
    }
    if (it % prm.refine_every == 0) {
      const std::size_t before = r.mesh.vertex_count();
      r.mesh = refine_mesh(std::move(r.mesh), max_edge);
      if (r.mesh.vertex_count() != before) {
        rings = vertex_neighbors(r.mesh);
        calm = 0;
      }
    }
  }
  return r;
}

template <typename T>
BalloonResult run_balloon(const Volume<T> &vol, const Cylinder &cylinder, const BalloonParams &prm) {
  return run_balloon(vol, cylinder.base, &cylinder, prm);
}

} // namespace qct
