#pragma once

#include <array>
#include <map>

#include "lesionseg/volume_io.hpp"

namespace lesionseg {

// Off-slice RECIST estimates: each long-axis endpoint shrinks along its own
// in-plane direction by the Pythagorean projection of its physical distance
// to the axis intersection; the short axis follows the original short/long
// ratio. Offset 0 holds the input annotation verbatim.
struct Recist3D {
  RecistAnnotation base;
  std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
  int extent = 0;  // largest |tau| with positive long-axis length
  std::map<int, RecistAnnotation> by_offset;
};

// Estimates over tau in [-max_offset, max_offset]; entries exist only while
// the long axis keeps positive length.
Recist3D estimate_recist3d(const RecistAnnotation& ann,
                           const std::array<double, 3>& spacing_mm,
                           int max_offset);

// Auto-ranged variant covering every slice the lesion can reach.
Recist3D estimate_recist3d(const RecistAnnotation& ann,
                           const std::array<double, 3>& spacing_mm);

// Estimated annotation at the given offset, nullptr beyond the extent.
const RecistAnnotation* recist_at_offset(const Recist3D& r, int tau);

// Symmetric extent (tau_min, tau_max) of slices with positive length.
std::pair<int, int> recist3d_extent(const Recist3D& r);

}  // namespace lesionseg
