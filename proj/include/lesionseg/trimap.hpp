#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "lesionseg/image.hpp"
#include "lesionseg/volume_io.hpp"

namespace lesionseg {

// Four-region prior labeling. Numeric values double as the export encoding.
enum class TrimapLabel : std::uint8_t { BG = 0, FG = 1, PBG = 2, PFG = 3 };

inline constexpr std::uint8_t kIgnoreValue = 255;

struct Trimap {
  int width = 0;
  int height = 0;
  std::vector<TrimapLabel> data;
  // Fallback trimaps flag their uncertain pixels as ignore-during-training.
  bool uncertain_ignored = false;

  Trimap() = default;
  Trimap(int w, int h, TrimapLabel fill = TrimapLabel::BG)
      : width(w), height(h),
        data(static_cast<std::size_t>(w) * h, fill) {}

  TrimapLabel at(int x, int y) const {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  TrimapLabel& at(int x, int y) {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  std::size_t count(TrimapLabel l) const;
};

enum class TrimapMode { RecistR, BboxPlain, BboxInner, RecistDilateOnly };

struct ModelTrimapParams {
  double background_prob = 0.2;  // component mean below this can become BG
};

// 1-px Bresenham rasterization of both axis segments (endpoints rounded).
Bitmap rasterize_recist(const RecistAnnotation& ann, int width, int height);

// The RECIST-driven trimap: outer half of the ROI area as BG, the RECIST
// raster dilated to 10% of the ROI area as FG, remainder split PFG/PBG by
// distance to the FG and BG sets.
Trimap trimap_from_recist(const RecistAnnotation& ann, int width, int height);

// Bounding-box alternatives (tight RECIST bounds padded by 25%).
Trimap trimap_from_bbox(const RecistAnnotation& ann, int width, int height,
                        TrimapMode mode);

struct BinarizeResult {
  Bitmap mask;
  double threshold = 0.0;
};

// Largest threshold whose mask covers at least half of the annotation's
// raster pixels. nullopt = every raster pixel has zero probability (the
// model found nothing; callers fall back).
std::optional<BinarizeResult> binarize_to_cover(const Image2D& prob,
                                                const RecistAnnotation& ann);

// Trimap from a model probability map plus the RECIST lying on this slice
// (the 3D estimate off-slice, the actual annotation on the RECIST slice).
// nullopt propagates the binarize_to_cover fallback signal.
std::optional<Trimap> trimap_from_model(const Image2D& prob,
                                        const RecistAnnotation& slice_recist,
                                        const ModelTrimapParams& params = {});

// Degraded labeling used when GrabCut or the binarization fails: model
// components overlapping the RECIST raster become FG, confident background
// components with no overlap become BG, everything else is ignored.
Trimap fallback_labels(const Image2D& prob, const RecistAnnotation& slice_recist,
                       const ModelTrimapParams& params = {});

// Export encoding {0=BG, 1=FG, 2=PBG, 3=PFG, 255=ignore} as a single-slice
// raster in the volume/mask file format.
Mask trimap_to_raster(const Trimap& t, const std::array<double, 3>& spacing);

// Training view: FG -> 1, BG -> 0, uncertain pixels ignored.
struct LabeledSlice {
  Bitmap labels;
  Bitmap ignore;
};
LabeledSlice trimap_training_labels(const Trimap& t);

}  // namespace lesionseg
