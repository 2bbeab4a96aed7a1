#include "lesionseg/geometry.hpp"

#include <algorithm>

namespace lesionseg {

double point_segment_distance(Point2 p, Point2 a, Point2 b) {
  const Point2 ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 == 0.0) return norm(p - a);
  double t = dot(p - a, ab) / len2;
  t = std::clamp(t, 0.0, 1.0);
  return norm(p - (a + t * ab));
}

std::optional<Point2> segment_intersection(const Segment& a, const Segment& b,
                                           double tol_px) {
  const Point2 da = a[1] - a[0];
  const Point2 db = b[1] - b[0];
  const double denom = cross(da, db);
  const double scale = std::max(norm(da) * norm(db), 1e-30);
  if (std::abs(denom) < 1e-12 * scale) return std::nullopt;
  const double t = cross(b[0] - a[0], db) / denom;
  const Point2 p = a[0] + t * da;
  if (point_segment_distance(p, a[0], a[1]) > tol_px) return std::nullopt;
  if (point_segment_distance(p, b[0], b[1]) > tol_px) return std::nullopt;
  return p;
}

}  // namespace lesionseg
