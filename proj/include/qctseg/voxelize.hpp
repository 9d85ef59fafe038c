// Point-in-mesh voxelization by parity ray casting along +x.
#pragma once

#include "errors.hpp"
#include "mesh.hpp"
#include "volume.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace qct {

struct EnclosedMask {
  LabelMask inside;  ///< voxel centers enclosed by the mesh
  LabelMask surface; ///< inside voxels with at least one outside 6-neighbour
};

namespace detail {

struct P2 {
  double y, z;
};

inline bool lex_less(const P2 &a, const P2 &b) { return a.y < b.y || (a.y == b.y && a.z < b.z); }

/// 2D orientation of p against the directed edge a -> b, evaluated with the
/// endpoints in canonical order so the two faces sharing an edge get exactly
/// opposite values.
inline double edge_function(const P2 &a, const P2 &b, const P2 &p) {
  const bool flip = lex_less(b, a);
  const P2 &lo = flip ? b : a;
  const P2 &hi = flip ? a : b;
  const double e = (hi.y - lo.y) * (p.z - lo.z) - (hi.z - lo.z) * (p.y - lo.y);
  return flip ? -e : e;
}

/// Tie-break for points exactly on an edge of a counter-clockwise triangle:
/// exactly one of a->b and b->a owns the edge.
inline bool owns_edge(const P2 &a, const P2 &b) { return b.z < a.z || (b.z == a.z && b.y < a.y); }

} // namespace detail

/// Voxels whose centers lie inside the closed mesh, plus the surface subset.
inline EnclosedMask mesh_enclosed_mask(const TriangleMesh &mesh, const GridGeometry &grid) {
  if (!is_closed_manifold(mesh))
    throw PipelineError("mesh_enclosed_mask: mesh is not closed");
  const int nx = grid.nx(), ny = grid.ny(), nz = grid.nz();
  std::vector<std::vector<double>> crossings(static_cast<std::size_t>(ny) * nz);

  for (const auto &f : mesh.faces) {
    const Vec3 &A = mesh.positions[static_cast<std::size_t>(f[0])];
    Vec3 B = mesh.positions[static_cast<std::size_t>(f[1])];
    Vec3 C = mesh.positions[static_cast<std::size_t>(f[2])];
    detail::P2 a{A.y, A.z}, b{B.y, B.z}, c{C.y, C.z};
    double area = detail::edge_function(a, b, c);
    if (area == 0.0)
      continue;
    if (area < 0.0) {
      std::swap(b, c);
      std::swap(B, C);
      area = -area;
    }
    const double ymin = std::min({a.y, b.y, c.y}), ymax = std::max({a.y, b.y, c.y});
    const double zmin = std::min({a.z, b.z, c.z}), zmax = std::max({a.z, b.z, c.z});
    const int j0 = std::max(0, static_cast<int>(std::ceil((ymin - grid.origin.y) / grid.spacing.y - 0.5)));
    const int j1 = std::min(ny - 1, static_cast<int>(std::floor((ymax - grid.origin.y) / grid.spacing.y - 0.5)));
    const int k0 = std::max(0, static_cast<int>(std::ceil((zmin - grid.origin.z) / grid.spacing.z - 0.5)));
    const int k1 = std::min(nz - 1, static_cast<int>(std::floor((zmax - grid.origin.z) / grid.spacing.z - 0.5)));
    const bool own_ab = detail::owns_edge(a, b), own_bc = detail::owns_edge(b, c), own_ca = detail::owns_edge(c, a);
    for (int k = k0; k <= k1; ++k)
      for (int j = j0; j <= j1; ++j) {
        const detail::P2 p{grid.origin.y + (j + 0.5) * grid.spacing.y, grid.origin.z + (k + 0.5) * grid.spacing.z};
        const double wc = detail::edge_function(a, b, p);
        const double wa = detail::edge_function(b, c, p);
        const double wb = detail::edge_function(c, a, p);
        if (wc < 0 || wa < 0 || wb < 0)
          continue;
        if ((wc == 0 && !own_ab) || (wa == 0 && !own_bc) || (wb == 0 && !own_ca))
          continue;
        const double x = (wa * A.x + wb * B.x + wc * C.x) / area;
        crossings[static_cast<std::size_t>(j) + static_cast<std::size_t>(ny) * static_cast<std::size_t>(k)].push_back(x);
      }
  }

  EnclosedMask out{LabelMask(grid, 0), LabelMask(grid, 0)};
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j) {
      auto &xs = crossings[static_cast<std::size_t>(j) + static_cast<std::size_t>(ny) * static_cast<std::size_t>(k)];
      if (xs.empty())
        continue;
      std::sort(xs.begin(), xs.end());
      std::size_t passed = 0;
      for (int i = 0; i < nx; ++i) {
        const double x = grid.origin.x + (i + 0.5) * grid.spacing.x;
        while (passed < xs.size() && xs[passed] < x)
          ++passed;
        if (passed % 2 == 1)
          out.inside.at(i, j, k) = 1;
      }
    }

  const int di[6] = {1, -1, 0, 0, 0, 0}, dj[6] = {0, 0, 1, -1, 0, 0}, dk[6] = {0, 0, 0, 0, 1, -1};
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        if (!out.inside.at(i, j, k))
          continue;
        for (int d = 0; d < 6; ++d) {
          const int a = i + di[d], b = j + dj[d], c = k + dk[d];
          if (!grid.contains(a, b, c) || !out.inside.at(a, b, c)) {
            out.surface.at(i, j, k) = 1;
            break;
          }
        }
      }
  return out;
}

} // namespace qct
