#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lesionseg/geometry.hpp"
#include "lesionseg/image.hpp"

namespace lesionseg {

enum class ScalarType { int16, float32, uint8 };

// 3D scalar grid with physical spacing. Data is z-major ((z*ny + y)*nx + x).
// Storage is float regardless of dtype; int16/uint8 payloads are exactly
// representable, so file round trips are bit preserving.
struct Volume {
  std::array<int, 3> dims{0, 0, 0};              // (nx, ny, nz)
  std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
  ScalarType dtype = ScalarType::float32;
  std::vector<float> data;

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  float at(int x, int y, int z) const {
    return data[(static_cast<std::size_t>(z) * dims[1] + y) * dims[0] + x];
  }
  float& at(int x, int y, int z) {
    return data[(static_cast<std::size_t>(z) * dims[1] + y) * dims[0] + x];
  }
  // Copy of axial slice z as a single-channel image.
  Image2D slice(int z) const;
};

// Per-voxel labels. Binary {0,1} for masks proper; label exports reuse the
// same container and file format with extended values.
struct Mask {
  std::array<int, 3> dims{0, 0, 0};
  std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
  std::vector<std::uint8_t> data;

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  std::uint8_t at(int x, int y, int z) const {
    return data[(static_cast<std::size_t>(z) * dims[1] + y) * dims[0] + x];
  }
  std::uint8_t& at(int x, int y, int z) {
    return data[(static_cast<std::size_t>(z) * dims[1] + y) * dims[0] + x];
  }
  std::size_t foreground_count() const;
};

// Throws unless every voxel is 0 or 1.
void require_binary(const Mask& m, const char* what);

// RECIST diameters on one axial slice: the long axis, its perpendicular
// short axis, and the HU display window. Endpoint coordinates are subpixel
// (x, y) in slice pixel space.
struct RecistAnnotation {
  std::string lesion_id;
  std::string patient_id;
  int slice_index = 0;
  Segment long_axis{};
  Segment short_axis{};
  std::array<double, 2> window{0.0, 1.0};  // (lo, hi)
};

// One dataset entry: where the volume lives, its annotation, optional ground
// truth, and the cross-validation fold.
struct LesionRecord {
  std::string volume_path;
  RecistAnnotation annotation;
  std::string gt_mask_path;  // empty when absent
  int fold = -1;             // -1 = unassigned
};

double long_axis_length_px(const RecistAnnotation& ann);
double short_axis_length_px(const RecistAnnotation& ann);

// Intersection point of the two axis segments (throws if they do not meet
// within 0.5 px).
Point2 axis_intersection(const RecistAnnotation& ann);

// Structural validation against a host volume: slice in range, segments
// intersect, long >= short in physical mm.
void validate_annotation(const RecistAnnotation& ann, const Volume& vol);

// ---- File formats -------------------------------------------------------
// Volumes and masks: JSON sidecar `<base>.vol.json` + raw little-endian
// payload `<base>.raw`. Annotations: `<path>.recist.json`, a JSON array.

void write_volume(const Volume& vol, const std::string& path);
Volume read_volume(const std::string& path);

void write_mask(const Mask& mask, const std::string& path);
Mask read_mask(const std::string& path);

void write_annotations(const std::vector<RecistAnnotation>& anns,
                       const std::string& path);
std::vector<RecistAnnotation> read_annotations(const std::string& path);

void write_lesion_records(const std::vector<LesionRecord>& records,
                          const std::string& path);
std::vector<LesionRecord> read_lesion_records(const std::string& path);

// ---- Preprocessing ------------------------------------------------------

// Square axial ROI centered at the axis intersection with in-plane side
// twice the long-axis pixel length, clamped to volume bounds, carried over
// every slice. Intensities are windowed affinely from [lo, hi] to [0, 1].
struct RoiVolume {
  Volume vol;              // float32, values in [0, 1]
  RecistAnnotation ann;    // endpoints shifted into ROI coordinates
  int x0 = 0, y0 = 0;      // ROI origin in the source volume
};

RoiVolume crop_and_window(const Volume& vol, const RecistAnnotation& ann);

// Recover RECIST diameters from a binary mask: on the maximal-area slice
// (ties -> smallest index), the long axis is the longest in-mask chord
// between boundary pixels (physical mm) and the short axis the longest
// in-mask chord within 5 degrees of perpendicular that crosses it.
RecistAnnotation mask_to_recist(const Mask& mask);

// Scale each axis by an independent factor drawn uniformly from
// [1-max_fraction, 1+max_fraction], endpoints moved about the intersection
// point. Lengths are clamped to >= 1 px and short <= long (physical).
RecistAnnotation inject_recist_noise(const RecistAnnotation& ann,
                                     double max_fraction, std::uint64_t seed,
                                     double sx = 1.0, double sy = 1.0);

}  // namespace lesionseg
