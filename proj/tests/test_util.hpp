// Small helpers shared by the test binaries.
#pragma once

#include "qctseg/qctseg.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

namespace qct::testing {

/// Unique scratch directory removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string &tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("qctseg_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;

  const std::filesystem::path &path() const { return path_; }
  std::filesystem::path operator/(const std::string &name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

inline std::vector<unsigned char> read_bytes(const std::filesystem::path &p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string read_file(const std::filesystem::path &p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline GridGeometry cube_grid(int n, double spacing = 1.0) {
  GridGeometry g;
  g.dims = {n, n, n};
  g.spacing = {spacing, spacing, spacing};
  return g;
}

inline std::size_t count_label(const LabelMask &m, std::uint8_t label) {
  std::size_t n = 0;
  for (auto v : m.values())
    n += v == label ? 1 : 0;
  return n;
}

/// Binary mask of one label of a ground-truth label volume.
inline LabelMask select_label(const LabelMask &m, std::uint8_t label) {
  LabelMask out(m.grid(), 0);
  for (std::size_t i = 0; i < m.size(); ++i)
    out[i] = m[i] == label ? 1 : 0;
  return out;
}

inline LabelMask random_mask(const GridGeometry &g, double fill, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution b(fill);
  LabelMask m(g, 0);
  for (auto &v : m.storage())
    v = b(rng) ? 1 : 0;
  return m;
}

/// Quarter turn about the z-axis through the grid center (requires nx == ny
/// and equal in-plane spacing): voxel (i, j, k) moves to (ny - 1 - j, i, k).
template <typename T> Volume<T> rotate90(const Volume<T> &v) {
  const GridGeometry &g = v.grid();
  Volume<T> out(g);
  for (int k = 0; k < g.nz(); ++k)
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i)
        out.at(g.ny() - 1 - j, i, k) = v.at(i, j, k);
  return out;
}

/// The same quarter turn applied to a physical point.
inline Vec3 rotate90_point(const GridGeometry &g, const Vec3 &p) {
  const Vec3 c = g.origin + Vec3{g.nx() * g.spacing.x, g.ny() * g.spacing.y, 0.0} * 0.5;
  return {c.x - (p.y - c.y), c.y + (p.x - c.x), p.z};
}

inline Vec3 rotate90_dir(const Vec3 &d) { return {-d.y, d.x, d.z}; }

} // namespace qct::testing
