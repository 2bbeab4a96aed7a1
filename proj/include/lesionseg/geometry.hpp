#pragma once

#include <array>
#include <cmath>
#include <optional>

namespace lesionseg {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }
inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Point2 p) { return std::hypot(p.x, p.y); }

using Segment = std::array<Point2, 2>;

// Length of a segment under anisotropic in-plane spacing (mm per pixel).
inline double physical_length(const Segment& s, double sx, double sy) {
  return std::hypot((s[1].x - s[0].x) * sx, (s[1].y - s[0].y) * sy);
}

double point_segment_distance(Point2 p, Point2 a, Point2 b);

// Intersection point of the two segments' supporting lines, accepted when it
// lies within tol_px of both segments. Near-parallel pairs yield nullopt.
std::optional<Point2> segment_intersection(const Segment& a, const Segment& b,
                                           double tol_px = 0.5);

}  // namespace lesionseg
