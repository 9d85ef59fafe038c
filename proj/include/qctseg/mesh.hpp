// Closed triangle meshes with per-vertex dynamic state: icosphere
// construction, adjacency, manifold checks, longest-edge refinement and OBJ
// export.
#pragma once

#include "errors.hpp"
#include "geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <queue>
#include <unordered_map>
#include <vector>

namespace qct {

using Face = std::array<int, 3>;

/// Counter-clockwise faces seen from outside. `velocities` parallels `positions`.
struct TriangleMesh {
  std::vector<Vec3> positions;
  std::vector<Vec3> velocities;
  std::vector<Face> faces;

  std::size_t vertex_count() const { return positions.size(); }
  std::size_t face_count() const { return faces.size(); }
};

inline std::uint64_t edge_key(int a, int b) {
  const auto lo = static_cast<std::uint64_t>(std::min(a, b));
  const auto hi = static_cast<std::uint64_t>(std::max(a, b));
  return (lo << 32) | hi;
}

/// Undirected edge -> incident face count.
inline std::map<std::uint64_t, int> edge_face_counts(const TriangleMesh &m) {
  std::map<std::uint64_t, int> counts;
  for (const auto &f : m.faces)
    for (int e = 0; e < 3; ++e)
      ++counts[edge_key(f[e], f[(e + 1) % 3])];
  return counts;
}

inline std::size_t edge_count(const TriangleMesh &m) { return edge_face_counts(m).size(); }

inline long euler_characteristic(const TriangleMesh &m) {
  return static_cast<long>(m.vertex_count()) - static_cast<long>(edge_count(m)) + static_cast<long>(m.face_count());
}

/// Every edge has exactly two incident faces traversing it in opposite directions.
inline bool is_closed_manifold(const TriangleMesh &m) {
  std::map<std::pair<int, int>, int> directed;
  for (const auto &f : m.faces) {
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2])
      return false;
    for (int e = 0; e < 3; ++e)
      if (++directed[{f[e], f[(e + 1) % 3]}] > 1)
        return false;
  }
  for (const auto &[edge, n] : directed)
    if (!directed.count({edge.second, edge.first}))
      return false;
  return !m.faces.empty();
}

inline Vec3 face_normal_area2(const TriangleMesh &m, const Face &f) {
  return cross(m.positions[static_cast<std::size_t>(f[1])] - m.positions[static_cast<std::size_t>(f[0])],
               m.positions[static_cast<std::size_t>(f[2])] - m.positions[static_cast<std::size_t>(f[0])]);
}

inline double min_face_area(const TriangleMesh &m) {
  double a = std::numeric_limits<double>::infinity();
  for (const auto &f : m.faces)
    a = std::min(a, 0.5 * norm(face_normal_area2(m, f)));
  return a;
}

/// Sorted one-ring of every vertex.
inline std::vector<std::vector<int>> vertex_neighbors(const TriangleMesh &m) {
  std::vector<std::vector<int>> nb(m.vertex_count());
  for (const auto &f : m.faces)
    for (int e = 0; e < 3; ++e) {
      nb[static_cast<std::size_t>(f[e])].push_back(f[(e + 1) % 3]);
      nb[static_cast<std::size_t>(f[e])].push_back(f[(e + 2) % 3]);
    }
  for (auto &n : nb) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
  return nb;
}

/// Area-weighted average of incident face normals, normalized.
inline std::vector<Vec3> vertex_normals(const TriangleMesh &m) {
  std::vector<Vec3> n(m.vertex_count());
  for (const auto &f : m.faces) {
    const Vec3 fn = face_normal_area2(m, f);
    for (int v : f)
      n[static_cast<std::size_t>(v)] += fn;
  }
  for (auto &v : n)
    v = normalized(v);
  return n;
}

/// Signed enclosed volume (divergence theorem); positive for outward faces.
inline double enclosed_volume(const TriangleMesh &m) {
  double v = 0.0;
  for (const auto &f : m.faces)
    v += dot(m.positions[static_cast<std::size_t>(f[0])],
             cross(m.positions[static_cast<std::size_t>(f[1])], m.positions[static_cast<std::size_t>(f[2])]));
  return v / 6.0;
}

/// Icosahedron subdivided `subdivisions` times (1:4 midpoint split), projected
/// to the sphere of `radius` about `center`, zero velocities.
inline TriangleMesh make_icosphere(const Vec3 &center, double radius, int subdivisions) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> p = {{-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
                         {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
                         {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
  std::vector<Face> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                         {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                         {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (auto &v : p)
    v = normalized(v);

  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::uint64_t, int> mid;
    auto midpoint = [&](int a, int b) {
      const auto key = edge_key(a, b);
      if (auto it = mid.find(key); it != mid.end())
        return it->second;
      p.push_back(normalized(p[static_cast<std::size_t>(a)] + p[static_cast<std::size_t>(b)]));
      const int idx = static_cast<int>(p.size()) - 1;
      mid.emplace(key, idx);
      return idx;
    };
    std::vector<Face> next;
    next.reserve(f.size() * 4);
    for (const auto &t : f) {
      const int ab = midpoint(t[0], t[1]), bc = midpoint(t[1], t[2]), ca = midpoint(t[2], t[0]);
      next.push_back({t[0], ab, ca});
      next.push_back({t[1], bc, ab});
      next.push_back({t[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    f = std::move(next);
  }

  TriangleMesh m;
  m.positions.reserve(p.size());
  for (const auto &v : p)
    m.positions.push_back(center + v * radius);
  m.velocities.assign(p.size(), Vec3{});
  m.faces = std::move(f);
  for (auto &t : m.faces) {
    const Vec3 c = (m.positions[static_cast<std::size_t>(t[0])] + m.positions[static_cast<std::size_t>(t[1])] +
                    m.positions[static_cast<std::size_t>(t[2])]) / 3.0;
    if (dot(face_normal_area2(m, t), c - center) < 0.0)
      std::swap(t[1], t[2]);
  }
  return m;
}

/// Longest-edge bisection until no edge exceeds `max_edge`. Both faces of a
/// split edge are split (conforming), so the result stays a closed manifold
/// with unchanged topology. New vertices get the mean endpoint velocity.
inline TriangleMesh refine_mesh(TriangleMesh m, double max_edge) {
  if (m.velocities.size() != m.positions.size())
    m.velocities.resize(m.positions.size());
  std::unordered_map<std::uint64_t, std::array<int, 2>> edge_faces;
  edge_faces.reserve(m.faces.size() * 2);
  auto attach = [&](int a, int b, int face) {
    auto &slot = edge_faces.try_emplace(edge_key(a, b), std::array<int, 2>{-1, -1}).first->second;
    (slot[0] < 0 ? slot[0] : slot[1]) = face;
  };
  auto replace = [&](int a, int b, int old_face, int new_face) {
    auto &slot = edge_faces.at(edge_key(a, b));
    (slot[0] == old_face ? slot[0] : slot[1]) = new_face;
  };
  for (int fi = 0; fi < static_cast<int>(m.faces.size()); ++fi)
    for (int e = 0; e < 3; ++e)
      attach(m.faces[static_cast<std::size_t>(fi)][e], m.faces[static_cast<std::size_t>(fi)][(e + 1) % 3], fi);

  struct Item {
    double length;
    std::uint64_t key;
    bool operator<(const Item &o) const { return length != o.length ? length < o.length : key > o.key; }
  };
  std::priority_queue<Item> queue;
  auto length = [&](int a, int b) {
    return distance(m.positions[static_cast<std::size_t>(a)], m.positions[static_cast<std::size_t>(b)]);
  };
  auto consider = [&](int a, int b) {
    const double l = length(a, b);
    if (l > max_edge)
      queue.push({l, edge_key(a, b)});
  };
  for (const auto &[key, faces] : edge_faces) {
    (void)faces;
    const int a = static_cast<int>(key >> 32), b = static_cast<int>(key & 0xFFFFFFFFu);
    consider(a, b);
  }

  // Rotates face `fi` so that it starts with directed edge a -> b; returns the apex.
  auto apex_after = [&](int fi, int a, int b) {
    Face &f = m.faces[static_cast<std::size_t>(fi)];
    for (int r = 0; r < 3; ++r) {
      if (f[0] == a && f[1] == b)
        return f[2];
      std::rotate(f.begin(), f.begin() + 1, f.end());
    }
    return -1;
  };

  while (!queue.empty()) {
    const Item item = queue.top();
    queue.pop();
    auto it = edge_faces.find(item.key);
    if (it == edge_faces.end())
      continue;
    int u = static_cast<int>(item.key >> 32), v = static_cast<int>(item.key & 0xFFFFFFFFu);
    const auto [fa, fb] = it->second;
    int f1 = fa, f2 = fb;
    int w1 = apex_after(f1, u, v);
    if (w1 < 0) {
      std::swap(f1, f2);
      w1 = apex_after(f1, u, v);
    }
    const int w2 = apex_after(f2, v, u);
    if (w1 < 0 || w2 < 0)
      throw Error("refine_mesh: mesh is not a consistently oriented manifold");

    const int mid = static_cast<int>(m.positions.size());
    m.positions.push_back((m.positions[static_cast<std::size_t>(u)] + m.positions[static_cast<std::size_t>(v)]) * 0.5);
    m.velocities.push_back((m.velocities[static_cast<std::size_t>(u)] + m.velocities[static_cast<std::size_t>(v)]) * 0.5);

    const int f1b = static_cast<int>(m.faces.size());
    const int f2b = f1b + 1;
    m.faces[static_cast<std::size_t>(f1)] = {u, mid, w1};
    m.faces.push_back({mid, v, w1});
    m.faces[static_cast<std::size_t>(f2)] = {v, mid, w2};
    m.faces.push_back({mid, u, w2});

    edge_faces.erase(it);
    replace(v, w1, f1, f1b);
    replace(u, w2, f2, f2b);
    attach(u, mid, f1);
    attach(u, mid, f2b);
    attach(mid, v, f1b);
    attach(mid, v, f2);
    attach(mid, w1, f1);
    attach(mid, w1, f1b);
    attach(mid, w2, f2);
    attach(mid, w2, f2b);

    consider(u, mid);
    consider(mid, v);
    consider(mid, w1);
    consider(mid, w2);
  }
  return m;
}

inline void write_obj(const TriangleMesh &m, const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out)
    throw InputError("cannot write '" + path.string() + "'");
  out.precision(10);
  for (const auto &p : m.positions)
    out << "v " << p.x << ' ' << p.y << ' ' << p.z << '\n';
  for (const auto &f : m.faces)
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  if (!out)
    throw InputError("failed writing '" + path.string() + "'");
}

} // namespace qct
