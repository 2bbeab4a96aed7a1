#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace lesionseg {

// Row-major 2D raster with interleaved channels, float storage.
// Index layout: (y * width + x) * channels + c.
struct Image2D {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> data;

  Image2D() = default;
  Image2D(int w, int h, int c = 1, float fill = 0.0f)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }
  float at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

// Binary raster used for 2D masks and intermediate label work.
struct Bitmap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Bitmap() = default;
  Bitmap(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t at(int x, int y) const {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t& at(int x, int y) {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  std::size_t count() const;
};

}  // namespace lesionseg
