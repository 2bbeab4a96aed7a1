#include "lesionseg/recist3d.hpp"

#include <cmath>
#include <stdexcept>

namespace lesionseg {

namespace {

// Physical distance from an endpoint to the intersection point.
double endpoint_distance_mm(Point2 e, Point2 c, double sx, double sy) {
  return std::hypot((e.x - c.x) * sx, (e.y - c.y) * sy);
}

}  // namespace

Recist3D estimate_recist3d(const RecistAnnotation& ann,
                           const std::array<double, 3>& spacing_mm,
                           int max_offset) {
  if (!(spacing_mm[2] > 0.0))
    throw std::invalid_argument("z spacing must be positive");
  if (max_offset < 0) throw std::invalid_argument("max_offset must be >= 0");
  const double sx = spacing_mm[0], sy = spacing_mm[1], sz = spacing_mm[2];
  if (long_axis_length_px(ann) <= 0.0)
    throw std::invalid_argument("degenerate long axis");
  const Point2 c = axis_intersection(ann);

  const double a0 = endpoint_distance_mm(ann.long_axis[0], c, sx, sy);
  const double a1 = endpoint_distance_mm(ann.long_axis[1], c, sx, sy);
  const double long_mm = physical_length(ann.long_axis, sx, sy);

  Recist3D out;
  out.base = ann;
  out.spacing_mm = spacing_mm;
  out.by_offset[0] = ann;

  for (int tau = 1; tau <= max_offset; ++tau) {
    const double dz = tau * sz;
    const auto shrink = [dz](double a) {
      return std::sqrt(std::max(0.0, a * a - dz * dz));
    };
    const double b0 = shrink(a0), b1 = shrink(a1);
    if (b0 + b1 <= 0.0) break;

    RecistAnnotation est = ann;
    est.long_axis[0] = a0 > 0.0 ? c + (b0 / a0) * (ann.long_axis[0] - c) : c;
    est.long_axis[1] = a1 > 0.0 ? c + (b1 / a1) * (ann.long_axis[1] - c) : c;
    // Short axis keeps the original short/long ratio, so both endpoints
    // scale by the long-axis shrink factor about the fixed intersection.
    const double factor = (b0 + b1) / long_mm;
    est.short_axis[0] = c + factor * (ann.short_axis[0] - c);
    est.short_axis[1] = c + factor * (ann.short_axis[1] - c);

    for (int sign : {1, -1}) {
      RecistAnnotation e = est;
      e.slice_index = ann.slice_index + sign * tau;
      out.by_offset[sign * tau] = e;
    }
    out.extent = tau;
  }
  return out;
}

Recist3D estimate_recist3d(const RecistAnnotation& ann,
                           const std::array<double, 3>& spacing_mm) {
  const Point2 c = axis_intersection(ann);
  const double a_max = std::max(
      endpoint_distance_mm(ann.long_axis[0], c, spacing_mm[0], spacing_mm[1]),
      endpoint_distance_mm(ann.long_axis[1], c, spacing_mm[0], spacing_mm[1]));
  const int max_offset =
      static_cast<int>(std::ceil(a_max / spacing_mm[2])) + 1;
  return estimate_recist3d(ann, spacing_mm, max_offset);
}

const RecistAnnotation* recist_at_offset(const Recist3D& r, int tau) {
  const auto it = r.by_offset.find(tau);
  return it == r.by_offset.end() ? nullptr : &it->second;
}

std::pair<int, int> recist3d_extent(const Recist3D& r) {
  return {-r.extent, r.extent};
}

}  // namespace lesionseg
