#ifndef SANDPILE_GEOMETRY_HPP
#define SANDPILE_GEOMETRY_HPP

#include <cmath>

namespace sandpile {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2& operator+=(const Vec2& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr Vec2& operator-=(const Vec2& o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  constexpr Vec2& operator*=(double s) {
    x *= s;
    y *= s;
    return *this;
  }
  friend constexpr bool operator==(const Vec2&, const Vec2&) = default;
};

constexpr Vec2 operator+(Vec2 a, const Vec2& b) { return a += b; }
constexpr Vec2 operator-(Vec2 a, const Vec2& b) { return a -= b; }
constexpr Vec2 operator-(const Vec2& a) { return {-a.x, -a.y}; }
constexpr Vec2 operator*(double s, Vec2 a) { return a *= s; }
constexpr Vec2 operator*(Vec2 a, double s) { return a *= s; }
constexpr Vec2 operator/(Vec2 a, double s) { return a *= (1.0 / s); }

constexpr double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }
inline double norm(const Vec2& a) { return std::hypot(a.x, a.y); }

// Twice the signed area of (a, b, c); positive for counterclockwise order.
constexpr double signed_area2(const Vec2& a, const Vec2& b, const Vec2& c) {
  return cross(b - a, c - a);
}

}  // namespace sandpile

#endif  // SANDPILE_GEOMETRY_HPP
