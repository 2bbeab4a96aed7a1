#pragma once

#include <vector>

#include "lesionseg/image.hpp"

namespace lesionseg {

// One 8-connected dilation pass with a 3x3 structuring element.
void dilate3x3(Bitmap& bm);

// Exact squared Euclidean distance (in pixels) to the nearest set pixel of
// `feature`. Pixels of an empty feature set get a large finite distance.
std::vector<double> squared_distance_transform(const Bitmap& feature);

// Connected components of the set pixels. Returns per-pixel component id
// (-1 for background) and writes the component count.
std::vector<int> connected_components(const Bitmap& bm, int connectivity,
                                      int* count);

// Separable Gaussian blur, edge-replicated, per channel. sigma <= 0 is a
// no-op copy.
Image2D gaussian_blur(const Image2D& img, double sigma);

// Box-average resampling (used for downscaling).
Image2D resize_area(const Image2D& img, int new_w, int new_h);

// Catmull-Rom bicubic resampling, edge-replicated.
Image2D resize_bicubic(const Image2D& img, int new_w, int new_h);

// Brute-force bilateral filter; single or multi channel (range distance over
// all channels).
Image2D bilateral_filter(const Image2D& img, double sigma_spatial,
                         double sigma_range);

}  // namespace lesionseg
