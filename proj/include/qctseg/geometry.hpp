// Small fixed-size vector algebra shared by every module.
#pragma once

#include <array>
#include <cmath>
#include <ostream>

namespace qct {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr double &operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

  constexpr Vec3 &operator+=(const Vec3 &o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr Vec3 &operator-=(const Vec3 &o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  constexpr Vec3 &operator*=(double s) {
    x *= s;
    y *= s;
    z *= s;
    return *this;
  }
  constexpr bool operator==(const Vec3 &) const = default;
};

constexpr Vec3 operator+(Vec3 a, const Vec3 &b) { return a += b; }
constexpr Vec3 operator-(Vec3 a, const Vec3 &b) { return a -= b; }
constexpr Vec3 operator-(const Vec3 &a) { return {-a.x, -a.y, -a.z}; }
constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }
constexpr Vec3 operator/(Vec3 a, double s) { return {a.x / s, a.y / s, a.z / s}; }

constexpr double dot(const Vec3 &a, const Vec3 &b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

constexpr Vec3 cross(const Vec3 &a, const Vec3 &b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3 &a) { return std::sqrt(dot(a, a)); }
constexpr double norm2(const Vec3 &a) { return dot(a, a); }
inline double distance(const Vec3 &a, const Vec3 &b) { return norm(a - b); }

/// Returns the zero vector when `a` has zero length.
inline Vec3 normalized(const Vec3 &a) {
  const double n = norm(a);
  return n > 0.0 ? a / n : Vec3{};
}

inline bool is_finite(const Vec3 &a) {
  return std::isfinite(a.x) && std::isfinite(a.y) && std::isfinite(a.z);
}

inline std::ostream &operator<<(std::ostream &os, const Vec3 &v) {
  return os << '(' << v.x << ", " << v.y << ", " << v.z << ')';
}

/// Closest point to `p` on the segment [a, b].
inline Vec3 closest_point_on_segment(const Vec3 &p, const Vec3 &a, const Vec3 &b) {
  const Vec3 ab = b - a;
  const double len2 = norm2(ab);
  if (len2 == 0.0)
    return a;
  double t = dot(p - a, ab) / len2;
  t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
  return a + ab * t;
}

/// Oriented plane: a point on it and a unit normal.
struct Plane {
  Vec3 point;
  Vec3 normal;

  double signed_distance(const Vec3 &p) const { return dot(p - point, normal); }
};

constexpr double kPi = 3.14159265358979323846;

} // namespace qct
