#include "lesionseg/grabcut.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "lesionseg/graphcut.hpp"

namespace lesionseg {

namespace {

void check_inputs(const Image2D& image, const Trimap& trimap,
                  const GrabCutParams& params) {
  if (image.channels != 1 && image.channels != 3)
    throw std::invalid_argument("grabcut expects 1 or 3 channels");
  if (image.width != trimap.width || image.height != trimap.height)
    throw std::invalid_argument("image/trimap dims mismatch");
  if (params.gamma < 0.0) throw std::invalid_argument("gamma must be >= 0");
  if (params.gmm_components < 1 || params.max_iters < 1)
    throw std::invalid_argument("bad grabcut params");
}

double pixel_sqdiff(const Image2D& img, int x0, int y0, int x1, int y1) {
  double s = 0.0;
  for (int c = 0; c < img.channels; ++c) {
    const double d = img.at(x0, y0, c) - img.at(x1, y1, c);
    s += d * d;
  }
  return s;
}

// Neighbor offsets paired with the Euclidean length divisor.
struct NeighborDir {
  int dx, dy;
  double dist;
};

std::vector<NeighborDir> neighbor_dirs(int connectivity) {
  std::vector<NeighborDir> dirs{{1, 0, 1.0}, {0, 1, 1.0}};
  if (connectivity == 8) {
    dirs.push_back({1, 1, std::numbers::sqrt2});
    dirs.push_back({-1, 1, std::numbers::sqrt2});
  }
  return dirs;
}

std::vector<double> side_samples(const Image2D& img, const Bitmap& labeling,
                                 std::uint8_t side) {
  std::vector<double> out;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      if (labeling.at(x, y) == side)
        for (int c = 0; c < img.channels; ++c) out.push_back(img.at(x, y, c));
  return out;
}

Bitmap initial_labeling(const Trimap& trimap) {
  Bitmap lab(trimap.width, trimap.height);
  for (std::size_t i = 0; i < trimap.data.size(); ++i)
    lab.data[i] = (trimap.data[i] == TrimapLabel::FG ||
                   trimap.data[i] == TrimapLabel::PFG)
                      ? 1
                      : 0;
  return lab;
}

}  // namespace

double grabcut_beta(const Image2D& image, int connectivity) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& d : neighbor_dirs(connectivity)) {
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        const int nx = x + d.dx, ny = y + d.dy;
        if (nx < 0 || ny < 0 || nx >= image.width || ny >= image.height)
          continue;
        sum += pixel_sqdiff(image, x, y, nx, ny);
        ++n;
      }
    }
  }
  if (n == 0 || sum == 0.0) return 0.0;
  return 1.0 / (2.0 * sum / static_cast<double>(n));
}

Bitmap grabcut_cut(const Image2D& image, const Trimap& trimap,
                   const GaussianMixture& fg, const GaussianMixture& bg,
                   const GrabCutParams& params) {
  check_inputs(image, trimap, params);
  const int w = image.width, h = image.height;
  const double beta = grabcut_beta(image, params.connectivity);

  std::vector<double> to_source(static_cast<std::size_t>(w) * h);
  std::vector<double> to_sink(to_source.size());
  std::vector<double> px(image.channels);
  double min_unary = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      for (int c = 0; c < image.channels; ++c) px[c] = image.at(x, y, c);
      const double d_fg = neg_log_density(fg, px.data());
      const double d_bg = neg_log_density(bg, px.data());
      min_unary = std::min({min_unary, d_fg, d_bg});
      switch (trimap.data[i]) {
        case TrimapLabel::FG:
          to_source[i] = kInfiniteCapacity;
          to_sink[i] = d_fg;
          break;
        case TrimapLabel::BG:
          to_source[i] = d_bg;
          to_sink[i] = kInfiniteCapacity;
          break;
        default:
          to_source[i] = d_bg;  // cost of landing background
          to_sink[i] = d_fg;    // cost of landing foreground
          break;
      }
    }
  }
  if (min_unary < 0.0) {
    // Negative log densities occur for peaked mixtures; shifting both
    // t-links of a pixel adds a constant to every cut, so the argmin
    // labeling is unchanged while capacities stay non-negative.
    for (std::size_t i = 0; i < to_source.size(); ++i) {
      if (to_source[i] < kInfiniteCapacity) to_source[i] -= min_unary;
      if (to_sink[i] < kInfiniteCapacity) to_sink[i] -= min_unary;
    }
  }

  GridWeights weights;
  const auto fill = [&](std::vector<double>& dst, int dx, int dy, double dist) {
    const int nx_count = dx != 0 ? w - 1 : w;
    const int ny_count = dy != 0 ? h - 1 : h;
    dst.resize(static_cast<std::size_t>(nx_count) * ny_count);
    for (int y = 0; y < ny_count; ++y) {
      for (int x = 0; x < nx_count; ++x) {
        // Base pixel of the pair; south_west pairs run (x+1, y) - (x, y+1).
        const int ax = dx < 0 ? x + 1 : x;
        const int bx = ax + dx, by = y + dy;
        const double sq = pixel_sqdiff(image, ax, y, bx, by);
        dst[static_cast<std::size_t>(y) * nx_count + x] =
            params.gamma * std::exp(-beta * sq) / dist;
      }
    }
  };
  fill(weights.east, 1, 0, 1.0);
  fill(weights.south, 0, 1, 1.0);
  if (params.connectivity == 8) {
    fill(weights.south_east, 1, 1, std::numbers::sqrt2);
    fill(weights.south_west, -1, 1, std::numbers::sqrt2);
  }

  auto net = build_grid(w, h, to_source, to_sink, weights, params.connectivity);
  const auto result = max_flow(std::move(net));

  Bitmap mask(w, h);
  for (std::size_t i = 0; i < mask.data.size(); ++i)
    mask.data[i] = result.side[i] == CutSide::source ? 1 : 0;
  return mask;
}

EnergyBreakdown grabcut_energy(const Image2D& image, const Bitmap& labeling,
                               const GaussianMixture& fg,
                               const GaussianMixture& bg,
                               const GrabCutParams& params) {
  if (image.width != labeling.width || image.height != labeling.height)
    throw std::invalid_argument("image/labeling dims mismatch");
  const double beta = grabcut_beta(image, params.connectivity);

  EnergyBreakdown e;
  std::vector<double> px(image.channels);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) px[c] = image.at(x, y, c);
      e.data_term += labeling.at(x, y) ? neg_log_density(fg, px.data())
                                       : neg_log_density(bg, px.data());
    }
  }
  for (const auto& d : neighbor_dirs(params.connectivity)) {
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        const int nx = x + d.dx, ny = y + d.dy;
        if (nx < 0 || ny < 0 || nx >= image.width || ny >= image.height)
          continue;
        if (labeling.at(x, y) == labeling.at(nx, ny)) continue;
        e.smoothness_term += params.gamma *
                             std::exp(-beta * pixel_sqdiff(image, x, y, nx, ny)) /
                             d.dist;
      }
    }
  }
  e.total = e.data_term + e.smoothness_term;
  return e;
}

GrabCutResult grabcut_run(const Image2D& image, const Trimap& trimap,
                          const GrabCutParams& params) {
  check_inputs(image, trimap, params);

  Bitmap labeling = initial_labeling(trimap);
  const std::size_t total = labeling.data.size();
  std::size_t n_fg = labeling.count();
  if (n_fg == 0) throw std::runtime_error("empty foreground region");
  if (n_fg == total) throw std::runtime_error("empty background region");

  GrabCutResult out;
  for (int iter = 0; iter < params.max_iters; ++iter) {
    const auto fg_samples = side_samples(image, labeling, 1);
    const auto bg_samples = side_samples(image, labeling, 0);
    if (fg_samples.empty() || bg_samples.empty())
      break;  // segmentation collapsed onto one side; keep the last labeling

    if (iter == 0) {
      out.fg_gmm = fit_gmm(fg_samples, image.channels, params.gmm_components,
                           20, params.seed);
      out.bg_gmm = fit_gmm(bg_samples, image.channels, params.gmm_components,
                           20, params.seed + 1);
    } else {
      // Warm-started EM keeps the data term non-increasing at the current
      // labeling, which makes the per-iteration total energy monotone.
      out.fg_gmm = refit_gmm(out.fg_gmm, fg_samples, 10);
      out.bg_gmm = refit_gmm(out.bg_gmm, bg_samples, 10);
    }

    Bitmap next = grabcut_cut(image, trimap, out.fg_gmm, out.bg_gmm, params);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < total; ++i)
      if (next.data[i] != labeling.data[i]) ++changed;
    labeling = std::move(next);
    out.energy_history.push_back(
        grabcut_energy(image, labeling, out.fg_gmm, out.bg_gmm, params));
    if (static_cast<double>(changed) <
        params.convergence_fraction * static_cast<double>(total))
      break;
  }
  out.mask = std::move(labeling);
  return out;
}

}  // namespace lesionseg
