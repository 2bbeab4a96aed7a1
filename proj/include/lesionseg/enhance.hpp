#pragma once

#include <cstdint>

#include "lesionseg/image.hpp"

namespace lesionseg {

// Synthetic degradation settings. noise_sigma is a standard deviation on the
// 0..255 intensity scale.
struct DegradeParams {
  double noise_sigma = 25.0;   // (0, 50]
  double scale = 2.0;          // [1, 4]
  double blur_sigma = 1.0;     // (0, 3]
  double contrast_kappa = 2.0; // [1, 3]
  std::uint64_t seed = 0;
};

struct ImagePair {
  Image2D degraded;
  Image2D clean;
};

// Random 32x32 crop plus white Gaussian noise, clipped to [0, 1].
ImagePair make_denoise_pair(const Image2D& image, const DegradeParams& params);

// Random 128x128 crop -> area downsample by `scale` -> Gaussian blur ->
// contrast compression toward mid-gray (0.5 + (v - 0.5) / kappa) -> bicubic
// upsample back, clipped to [0, 1].
ImagePair make_enhance_pair(const Image2D& image, const DegradeParams& params);

// Classical stand-in for the learned two-stage enhancer: edge-preserving
// denoise plus unsharp-mask boundary enhancement with a percentile contrast
// stretch. All channels share dims and live in [0, 1].
struct EnhanceStack {
  Image2D original;
  Image2D denoised;
  Image2D enhanced;
};

EnhanceStack classical_enhance(const Image2D& image);

// The three channels interleaved into one image (original, denoised,
// enhanced) for model input.
Image2D stack_to_image(const EnhanceStack& stack);

}  // namespace lesionseg
