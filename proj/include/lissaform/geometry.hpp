#pragma once

#include <cmath>
#include <numbers>

namespace lissaform {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
  constexpr Vec2& operator-=(const Vec2& o) { x -= o.x; y -= o.y; return *this; }
  constexpr Vec2& operator*=(double k) { x *= k; y *= k; return *this; }

  friend constexpr Vec2 operator+(Vec2 a, const Vec2& b) { return a += b; }
  friend constexpr Vec2 operator-(Vec2 a, const Vec2& b) { return a -= b; }
  friend constexpr Vec2 operator*(Vec2 a, double k) { return a *= k; }
  friend constexpr Vec2 operator*(double k, Vec2 a) { return a *= k; }
  friend constexpr bool operator==(const Vec2&, const Vec2&) = default;
};

// Positions and displacements share the representation.
using Point2 = Vec2;

inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
inline double norm(const Vec2& v) { return std::hypot(v.x, v.y); }
inline double distance(const Point2& a, const Point2& b) { return norm(a - b); }

/// Representative of `angle` in [0, 2π).
inline double wrap_2pi(double angle) {
  double r = std::fmod(angle, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  // fmod of a tiny negative number can round up to exactly 2π
  if (r >= kTwoPi) r = 0.0;
  return r;
}

/// Representative of `angle` in (-π, π].
inline double wrap_pi(double angle) {
  double r = kPi - wrap_2pi(kPi - angle);
  return r;
}

/// One-sided gap travelled from `from` to `to` in the positive direction, in [0, 2π).
inline double forward_gap(double from, double to) { return wrap_2pi(to - from); }

}  // namespace lissaform
