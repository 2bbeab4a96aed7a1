#include "lesionseg/enhance.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "lesionseg/imageops.hpp"

namespace lesionseg {

namespace {

void check_params(const DegradeParams& p) {
  if (!(p.noise_sigma > 0.0 && p.noise_sigma <= 50.0))
    throw std::invalid_argument("noise_sigma must be in (0, 50]");
  if (!(p.scale >= 1.0 && p.scale <= 4.0))
    throw std::invalid_argument("scale must be in [1, 4]");
  if (!(p.blur_sigma > 0.0 && p.blur_sigma <= 3.0))
    throw std::invalid_argument("blur_sigma must be in (0, 3]");
  if (!(p.contrast_kappa >= 1.0 && p.contrast_kappa <= 3.0))
    throw std::invalid_argument("contrast_kappa must be in [1, 3]");
}

Image2D random_crop(const Image2D& img, int size, std::mt19937_64& rng) {
  if (img.width < size || img.height < size)
    throw std::invalid_argument("image smaller than " + std::to_string(size) +
                                "x" + std::to_string(size) + " crop");
  std::uniform_int_distribution<int> dx(0, img.width - size);
  std::uniform_int_distribution<int> dy(0, img.height - size);
  const int x0 = dx(rng), y0 = dy(rng);
  Image2D out(size, size, img.channels);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(x, y, c) = img.at(x0 + x, y0 + y, c);
  return out;
}

void clip_unit(Image2D& img) {
  for (auto& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
}

}  // namespace

ImagePair make_denoise_pair(const Image2D& image, const DegradeParams& params) {
  check_params(params);
  std::mt19937_64 rng(params.seed);
  ImagePair pair;
  pair.clean = random_crop(image, 32, rng);
  pair.degraded = pair.clean;
  std::normal_distribution<double> noise(0.0, params.noise_sigma / 255.0);
  for (auto& v : pair.degraded.data)
    v = static_cast<float>(std::clamp(v + noise(rng), 0.0, 1.0));
  return pair;
}

ImagePair make_enhance_pair(const Image2D& image, const DegradeParams& params) {
  check_params(params);
  std::mt19937_64 rng(params.seed);
  ImagePair pair;
  pair.clean = random_crop(image, 128, rng);

  const int low = std::max(1, static_cast<int>(std::lround(128.0 / params.scale)));
  Image2D work = resize_area(pair.clean, low, low);
  work = gaussian_blur(work, params.blur_sigma);
  for (auto& v : work.data)
    v = static_cast<float>(0.5 + (v - 0.5) / params.contrast_kappa);
  work = resize_bicubic(work, 128, 128);
  clip_unit(work);
  pair.degraded = std::move(work);
  return pair;
}

EnhanceStack classical_enhance(const Image2D& image) {
  EnhanceStack stack;
  stack.original = image;
  stack.denoised = bilateral_filter(image, 1.5, 0.05);

  // Unsharp masking on the denoised channel, then a 1..99 percentile
  // contrast stretch.
  const Image2D blurred = gaussian_blur(stack.denoised, 1.5);
  Image2D sharp(image.width, image.height, image.channels);
  for (std::size_t i = 0; i < sharp.data.size(); ++i)
    sharp.data[i] = stack.denoised.data[i] +
                    0.8f * (stack.denoised.data[i] - blurred.data[i]);

  std::vector<float> sorted(sharp.data);
  std::sort(sorted.begin(), sorted.end());
  const auto percentile = [&](double q) {
    const std::size_t i = static_cast<std::size_t>(
        std::lround(q * static_cast<double>(sorted.size() - 1)));
    return static_cast<double>(sorted[i]);
  };
  const double p1 = percentile(0.01), p99 = percentile(0.99);
  if (p99 - p1 > 1e-9) {
    const double scale = 1.0 / (p99 - p1);
    for (auto& v : sharp.data)
      v = static_cast<float>((v - p1) * scale);
  }
  clip_unit(sharp);
  stack.enhanced = std::move(sharp);
  return stack;
}

Image2D stack_to_image(const EnhanceStack& stack) {
  const Image2D& o = stack.original;
  if (o.channels != 1)
    throw std::invalid_argument("enhance stack expects single-channel input");
  Image2D out(o.width, o.height, 3);
  for (std::size_t px = 0; px < o.pixel_count(); ++px) {
    out.data[px * 3 + 0] = stack.original.data[px];
    out.data[px * 3 + 1] = stack.denoised.data[px];
    out.data[px * 3 + 2] = stack.enhanced.data[px];
  }
  return out;
}

}  // namespace lesionseg
