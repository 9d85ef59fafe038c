// Header + raw volume files.
//
//   dims = 128 128 96
//   spacing = 1 1 1
//   origin = 0 0 0
//   dtype = i16          (i16 | u8)
//   raw = phantom.raw    (path relative to the header)
//
// The raw file is the bare little-endian sample stream, x-fastest.
#pragma once

#include "errors.hpp"
#include "volume.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

namespace qct {

enum class Dtype { i16, u8 };

inline const char *dtype_name(Dtype d) { return d == Dtype::i16 ? "i16" : "u8"; }
inline std::size_t dtype_bytes(Dtype d) { return d == Dtype::i16 ? 2 : 1; }

template <typename T> constexpr Dtype default_dtype() {
  return std::is_same_v<T, std::uint8_t> ? Dtype::u8 : Dtype::i16;
}

namespace detail {

inline std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T> std::int64_t to_stored(T v, Dtype d) {
  double x = static_cast<double>(v);
  if constexpr (std::is_floating_point_v<T>)
    x = std::round(x);
  const double lo = d == Dtype::i16 ? -32768.0 : 0.0;
  const double hi = d == Dtype::i16 ? 32767.0 : 255.0;
  return static_cast<std::int64_t>(std::clamp(x, lo, hi));
}

} // namespace detail

/// Writes `<path>` (header) and `<path stem>.raw` next to it. Floating samples
/// are rounded and clamped to the stored type.
template <typename T>
void save_volume(const Volume<T> &vol, const std::filesystem::path &path, Dtype dtype = default_dtype<T>()) {
  const GridGeometry &g = vol.grid();
  std::filesystem::path raw_path = path;
  raw_path.replace_extension(".raw");

  std::ofstream hdr(path);
  if (!hdr)
    throw InputError("cannot open '" + path.string() + "' for writing");
  hdr << std::setprecision(std::numeric_limits<double>::max_digits10);
  hdr << "dims = " << g.dims[0] << ' ' << g.dims[1] << ' ' << g.dims[2] << '\n';
  hdr << "spacing = " << g.spacing.x << ' ' << g.spacing.y << ' ' << g.spacing.z << '\n';
  hdr << "origin = " << g.origin.x << ' ' << g.origin.y << ' ' << g.origin.z << '\n';
  hdr << "dtype = " << dtype_name(dtype) << '\n';
  hdr << "raw = " << raw_path.filename().string() << '\n';
  if (!hdr)
    throw InputError("failed writing '" + path.string() + "'");

  std::vector<char> bytes;
  bytes.reserve(vol.size() * dtype_bytes(dtype));
  for (std::size_t i = 0; i < vol.size(); ++i) {
    const std::int64_t s = detail::to_stored(vol[i], dtype);
    if (dtype == Dtype::u8) {
      bytes.push_back(static_cast<char>(static_cast<std::uint8_t>(s)));
    } else {
      const auto u = static_cast<std::uint16_t>(static_cast<std::int16_t>(s));
      bytes.push_back(static_cast<char>(u & 0xFF));
      bytes.push_back(static_cast<char>(u >> 8));
    }
  }
  std::ofstream raw(raw_path, std::ios::binary);
  if (!raw)
    throw InputError("cannot open '" + raw_path.string() + "' for writing");
  raw.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!raw)
    throw InputError("failed writing '" + raw_path.string() + "'");
}

/// Reads a header file and its raw stream, converting samples to T.
template <typename T = float> Volume<T> load_volume(const std::filesystem::path &path) {
  std::ifstream hdr(path);
  if (!hdr)
    throw InputError("volume header '" + path.string() + "' not found");

  std::map<std::string, std::string> fields;
  std::string line;
  int lineno = 0;
  while (std::getline(hdr, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos)
      line.erase(hash);
    line = detail::trim(line);
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
    fields[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
  }
  for (const char *key : {"dims", "spacing", "origin", "dtype", "raw"})
    if (!fields.count(key))
      throw InputError(path.string() + ": missing field '" + key + "'");

  GridGeometry g;
  {
    std::istringstream ss(fields["dims"]);
    if (!(ss >> g.dims[0] >> g.dims[1] >> g.dims[2]))
      throw InputError(path.string() + ": malformed dims");
  }
  auto read_vec = [&](const std::string &key) {
    std::istringstream ss(fields[key]);
    std::string a, b, c;
    if (!(ss >> a >> b >> c))
      throw InputError(path.string() + ": malformed " + key);
    try {
      return Vec3{std::stod(a), std::stod(b), std::stod(c)};
    } catch (const std::exception &) {
      throw InputError(path.string() + ": malformed " + key);
    }
  };
  g.spacing = read_vec("spacing");
  g.origin = read_vec("origin");
  for (int a = 0; a < 3; ++a) {
    if (g.dims[a] < 1)
      throw InputError(path.string() + ": dims must be >= 1");
    if (!(g.spacing[a] > 0.0))
      throw InputError(path.string() + ": non-positive spacing");
  }

  Dtype dtype;
  if (fields["dtype"] == "i16")
    dtype = Dtype::i16;
  else if (fields["dtype"] == "u8")
    dtype = Dtype::u8;
  else
    throw InputError(path.string() + ": unsupported dtype '" + fields["dtype"] + "'");

  const std::filesystem::path raw_path = path.parent_path() / fields["raw"];
  std::ifstream raw(raw_path, std::ios::binary | std::ios::ate);
  if (!raw)
    throw InputError("raw file '" + raw_path.string() + "' not found");
  const auto bytes_on_disk = static_cast<std::size_t>(raw.tellg());
  const std::size_t expected = g.size() * dtype_bytes(dtype);
  if (bytes_on_disk != expected)
    throw InputError("raw file '" + raw_path.string() + "' has " + std::to_string(bytes_on_disk) +
                     " bytes, header implies " + std::to_string(expected));
  raw.seekg(0);
  std::vector<unsigned char> bytes(expected);
  raw.read(reinterpret_cast<char *>(bytes.data()), static_cast<std::streamsize>(expected));
  if (!raw)
    throw InputError("failed reading '" + raw_path.string() + "'");

  std::vector<T> data(g.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (dtype == Dtype::u8) {
      data[i] = static_cast<T>(bytes[i]);
    } else {
      const auto u = static_cast<std::uint16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
      data[i] = static_cast<T>(static_cast<std::int16_t>(u));
    }
  }
  return Volume<T>(g, std::move(data));
}

} // namespace qct
