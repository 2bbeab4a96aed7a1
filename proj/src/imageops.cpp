#include "lesionseg/imageops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace lesionseg {

std::size_t Bitmap::count() const {
  return static_cast<std::size_t>(
      std::count_if(data.begin(), data.end(), [](auto v) { return v != 0; }));
}

void dilate3x3(Bitmap& bm) {
  const Bitmap src = bm;
  for (int y = 0; y < bm.height; ++y) {
    for (int x = 0; x < bm.width; ++x) {
      if (src.at(x, y)) continue;
      bool hit = false;
      for (int dy = -1; dy <= 1 && !hit; ++dy) {
        for (int dx = -1; dx <= 1 && !hit; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= bm.width || ny >= bm.height) continue;
          hit = src.at(nx, ny) != 0;
        }
      }
      if (hit) bm.at(x, y) = 1;
    }
  }
}

namespace {

constexpr double kEdtInf = 1e20;

// Felzenszwalb-Huttenlocher 1D squared distance transform with sample
// spacing `step`.
void dt1d(const double* f, double* d, int n, double step) {
  std::vector<int> v(n);
  std::vector<double> z(n + 1);
  const double s2 = step * step;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    double s = ((f[q] + s2 * q * q) - (f[v[k]] + s2 * v[k] * v[k])) /
               (2.0 * s2 * (q - v[k]));
    while (s <= z[k]) {
      --k;
      s = ((f[q] + s2 * q * q) - (f[v[k]] + s2 * v[k] * v[k])) /
          (2.0 * s2 * (q - v[k]));
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = step * (q - v[k]);
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace

std::vector<double> squared_distance_transform(const Bitmap& feature) {
  const int w = feature.width, h = feature.height;
  std::vector<double> dist(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < dist.size(); ++i)
    dist[i] = feature.data[i] ? 0.0 : kEdtInf;

  std::vector<double> col(std::max(w, h)), out(std::max(w, h));
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) col[y] = dist[static_cast<std::size_t>(y) * w + x];
    dt1d(col.data(), out.data(), h, 1.0);
    for (int y = 0; y < h; ++y) dist[static_cast<std::size_t>(y) * w + x] = out[y];
  }
  for (int y = 0; y < h; ++y) {
    double* row = dist.data() + static_cast<std::size_t>(y) * w;
    std::copy(row, row + w, col.data());
    dt1d(col.data(), out.data(), w, 1.0);
    std::copy(out.data(), out.data() + w, row);
  }
  return dist;
}

std::vector<int> connected_components(const Bitmap& bm, int connectivity,
                                      int* count) {
  if (connectivity != 4 && connectivity != 8)
    throw std::invalid_argument("connectivity must be 4 or 8");
  const int w = bm.width, h = bm.height;
  std::vector<int> labels(static_cast<std::size_t>(w) * h, -1);
  std::vector<int> stack;
  int next = 0;
  for (int y0 = 0; y0 < h; ++y0) {
    for (int x0 = 0; x0 < w; ++x0) {
      const std::size_t i0 = static_cast<std::size_t>(y0) * w + x0;
      if (!bm.data[i0] || labels[i0] >= 0) continue;
      labels[i0] = next;
      stack.assign(1, static_cast<int>(i0));
      while (!stack.empty()) {
        const int i = stack.back();
        stack.pop_back();
        const int x = i % w, y = i / w;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            if (connectivity == 4 && dx != 0 && dy != 0) continue;
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const std::size_t ni = static_cast<std::size_t>(ny) * w + nx;
            if (bm.data[ni] && labels[ni] < 0) {
              labels[ni] = next;
              stack.push_back(static_cast<int>(ni));
            }
          }
        }
      }
      ++next;
    }
  }
  if (count) *count = next;
  return labels;
}

Image2D gaussian_blur(const Image2D& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (auto& k : kernel) k /= sum;

  const int w = img.width, h = img.height, c = img.channels;
  Image2D tmp(w, h, c), out(w, h, c);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int sx = std::clamp(x + i, 0, w - 1);
          acc += kernel[i + radius] * img.at(sx, y, ch);
        }
        tmp.at(x, y, ch) = static_cast<float>(acc);
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int sy = std::clamp(y + i, 0, h - 1);
          acc += kernel[i + radius] * tmp.at(x, sy, ch);
        }
        out.at(x, y, ch) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

Image2D resize_area(const Image2D& img, int new_w, int new_h) {
  if (new_w <= 0 || new_h <= 0)
    throw std::invalid_argument("resize target must be positive");
  if (new_w == img.width && new_h == img.height) return img;
  const double sx = static_cast<double>(img.width) / new_w;
  const double sy = static_cast<double>(img.height) / new_h;
  Image2D out(new_w, new_h, img.channels);
  for (int y = 0; y < new_h; ++y) {
    const double fy0 = y * sy, fy1 = (y + 1) * sy;
    const int iy0 = static_cast<int>(std::floor(fy0));
    const int iy1 = std::min(img.height - 1,
                             static_cast<int>(std::ceil(fy1)) - 1);
    for (int x = 0; x < new_w; ++x) {
      const double fx0 = x * sx, fx1 = (x + 1) * sx;
      const int ix0 = static_cast<int>(std::floor(fx0));
      const int ix1 = std::min(img.width - 1,
                               static_cast<int>(std::ceil(fx1)) - 1);
      for (int ch = 0; ch < img.channels; ++ch) {
        double acc = 0.0, wsum = 0.0;
        for (int iy = iy0; iy <= iy1; ++iy) {
          const double wy = std::min(fy1, iy + 1.0) - std::max(fy0, 1.0 * iy);
          for (int ix = ix0; ix <= ix1; ++ix) {
            const double wx =
                std::min(fx1, ix + 1.0) - std::max(fx0, 1.0 * ix);
            acc += wx * wy * img.at(ix, iy, ch);
            wsum += wx * wy;
          }
        }
        out.at(x, y, ch) = static_cast<float>(acc / wsum);
      }
    }
  }
  return out;
}

namespace {

// Catmull-Rom kernel.
double cubic_weight(double t) {
  t = std::abs(t);
  if (t <= 1.0) return 1.5 * t * t * t - 2.5 * t * t + 1.0;
  if (t < 2.0) return -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0;
  return 0.0;
}

}  // namespace

Image2D resize_bicubic(const Image2D& img, int new_w, int new_h) {
  if (new_w <= 0 || new_h <= 0)
    throw std::invalid_argument("resize target must be positive");
  if (new_w == img.width && new_h == img.height) return img;
  const double sx = static_cast<double>(img.width) / new_w;
  const double sy = static_cast<double>(img.height) / new_h;
  Image2D out(new_w, new_h, img.channels);
  for (int y = 0; y < new_h; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    const int iy = static_cast<int>(std::floor(fy));
    for (int x = 0; x < new_w; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      const int ix = static_cast<int>(std::floor(fx));
      for (int ch = 0; ch < img.channels; ++ch) {
        double acc = 0.0, wsum = 0.0;
        for (int j = -1; j <= 2; ++j) {
          const int syi = std::clamp(iy + j, 0, img.height - 1);
          const double wy = cubic_weight(fy - (iy + j));
          for (int i = -1; i <= 2; ++i) {
            const int sxi = std::clamp(ix + i, 0, img.width - 1);
            const double wx = cubic_weight(fx - (ix + i));
            acc += wx * wy * img.at(sxi, syi, ch);
            wsum += wx * wy;
          }
        }
        out.at(x, y, ch) = static_cast<float>(acc / wsum);
      }
    }
  }
  return out;
}

Image2D bilateral_filter(const Image2D& img, double sigma_spatial,
                         double sigma_range) {
  if (sigma_spatial <= 0.0 || sigma_range <= 0.0)
    throw std::invalid_argument("bilateral sigmas must be positive");
  const int radius =
      std::max(1, static_cast<int>(std::ceil(2.5 * sigma_spatial)));
  const double inv_s2 = 1.0 / (2.0 * sigma_spatial * sigma_spatial);
  const double inv_r2 = 1.0 / (2.0 * sigma_range * sigma_range);
  const int w = img.width, h = img.height, c = img.channels;
  Image2D out(w, h, c);
  std::vector<double> acc(c);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::fill(acc.begin(), acc.end(), 0.0);
      double wsum = 0.0;
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          const int nx = std::clamp(x + dx, 0, w - 1);
          const int ny = std::clamp(y + dy, 0, h - 1);
          double range2 = 0.0;
          for (int ch = 0; ch < c; ++ch) {
            const double d = img.at(nx, ny, ch) - img.at(x, y, ch);
            range2 += d * d;
          }
          const double wgt =
              std::exp(-(dx * dx + dy * dy) * inv_s2 - range2 * inv_r2);
          for (int ch = 0; ch < c; ++ch) acc[ch] += wgt * img.at(nx, ny, ch);
          wsum += wgt;
        }
      }
      for (int ch = 0; ch < c; ++ch)
        out.at(x, y, ch) = static_cast<float>(acc[ch] / wsum);
    }
  }
  return out;
}

}  // namespace lesionseg
