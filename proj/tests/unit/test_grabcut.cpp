#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "lesionseg/grabcut.hpp"

using namespace lesionseg;

namespace {

RecistAnnotation cross_annotation(Point2 c, double long_px, double short_px) {
  RecistAnnotation ann;
  ann.long_axis = {Point2{c.x - long_px / 2, c.y}, Point2{c.x + long_px / 2, c.y}};
  ann.short_axis = {Point2{c.x, c.y - short_px / 2}, Point2{c.x, c.y + short_px / 2}};
  return ann;
}

// Disk phantom slice: intensity fg_v inside radius, bg_v outside, Gaussian
// noise added.
struct DiskPhantom {
  Image2D image;
  Bitmap truth;
};

DiskPhantom disk_phantom(int side, double radius, float fg_v, float bg_v,
                         double noise, std::uint64_t seed) {
  DiskPhantom ph;
  ph.image = Image2D(side, side, 1);
  ph.truth = Bitmap(side, side);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, noise);
  const double c = (side - 1) / 2.0;
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const bool in = (x - c) * (x - c) + (y - c) * (y - c) <= radius * radius;
      ph.truth.at(x, y) = in ? 1 : 0;
      const double v = (in ? fg_v : bg_v) + (noise > 0 ? n(rng) : 0.0);
      ph.image.at(x, y) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  return ph;
}

double bitmap_dice(const Bitmap& a, const Bitmap& b) {
  std::size_t inter = 0, asz = 0, bsz = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    inter += a.data[i] && b.data[i];
    asz += a.data[i];
    bsz += b.data[i];
  }
  return asz + bsz == 0 ? 1.0 : 2.0 * inter / static_cast<double>(asz + bsz);
}

GaussianMixture point_gaussian(double mean, double var) {
  GaussianMixture g;
  g.components = 1;
  g.dim = 1;
  g.weights = {1.0};
  g.means = {mean};
  g.covariances = {var};
  return g;
}

}  // namespace

TEST_SUITE("grabcut") {

TEST_CASE("disk phantom with RECIST trimap reaches dice 0.95") {
  const auto ph = disk_phantom(72, 17.0, 0.8f, 0.2f, 0.05, 21);
  const auto ann = cross_annotation({35.5, 35.5}, 34, 34);
  const Trimap tri = trimap_from_recist(ann, 72, 72);
  GrabCutParams params;
  params.seed = 5;
  const auto res = grabcut_run(ph.image, tri, params);
  CHECK(bitmap_dice(res.mask, ph.truth) >= 0.95);
}

TEST_CASE("fully clamped trimap returns the clamp pattern") {
  Image2D img(8, 8, 1, 0.5f);
  Trimap tri(8, 8, TrimapLabel::BG);
  for (int y = 2; y < 6; ++y)
    for (int x = 2; x < 6; ++x) tri.at(x, y) = TrimapLabel::FG;
  GrabCutParams params;
  const auto res = grabcut_run(img, tri, params);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      CHECK(res.mask.at(x, y) == (tri.at(x, y) == TrimapLabel::FG ? 1 : 0));
}

TEST_CASE("gamma zero decouples pixels to the lower unary") {
  const auto ph = disk_phantom(24, 6.0, 0.85f, 0.15f, 0.03, 9);
  const auto ann = cross_annotation({11.5, 11.5}, 12, 12);
  const Trimap tri = trimap_from_recist(ann, 24, 24);
  GrabCutParams params;
  params.gamma = 0.0;
  params.seed = 3;
  const auto res = grabcut_run(ph.image, tri, params);

  std::vector<double> px(1);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) {
      if (tri.at(x, y) == TrimapLabel::FG) {
        CHECK(res.mask.at(x, y) == 1);
        continue;
      }
      if (tri.at(x, y) == TrimapLabel::BG) {
        CHECK(res.mask.at(x, y) == 0);
        continue;
      }
      px[0] = ph.image.at(x, y);
      const double d_fg = neg_log_density(res.fg_gmm, px.data());
      const double d_bg = neg_log_density(res.bg_gmm, px.data());
      if (d_fg < d_bg) CHECK(res.mask.at(x, y) == 1);
      if (d_bg < d_fg) CHECK(res.mask.at(x, y) == 0);
    }
}

TEST_CASE("hard clamps survive every iterate") {
  const auto ph = disk_phantom(40, 9.0, 0.7f, 0.3f, 0.08, 77);
  const auto ann = cross_annotation({19.5, 19.5}, 18, 16);
  const Trimap tri = trimap_from_recist(ann, 40, 40);
  GrabCutParams params;
  params.seed = 12;
  const auto res = grabcut_run(ph.image, tri, params);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x) {
      if (tri.at(x, y) == TrimapLabel::FG) CHECK(res.mask.at(x, y) == 1);
      if (tri.at(x, y) == TrimapLabel::BG) CHECK(res.mask.at(x, y) == 0);
    }
}

TEST_CASE("per-iteration energy is non-increasing") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto ph = disk_phantom(48, 11.0, 0.75f, 0.25f, 0.07, seed);
    const auto ann = cross_annotation({23.5, 23.5}, 22, 20);
    const Trimap tri = trimap_from_recist(ann, 48, 48);
    GrabCutParams params;
    params.seed = seed;
    const auto res = grabcut_run(ph.image, tri, params);
    REQUIRE(!res.energy_history.empty());
    for (std::size_t i = 1; i < res.energy_history.size(); ++i) {
      const double prev = res.energy_history[i - 1].total;
      const double cur = res.energy_history[i].total;
      CHECK(cur <= prev + 1e-6 * std::abs(prev) + 1e-9);
    }
    for (const auto& e : res.energy_history)
      CHECK(e.total == doctest::Approx(e.data_term + e.smoothness_term)
                           .epsilon(1e-12));
  }
}

TEST_CASE("energy closed forms") {
  Image2D img(3, 2, 1);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = 0.1f * static_cast<float>(i + 1);
  const auto fg = point_gaussian(0.6, 0.02);
  const auto bg = point_gaussian(0.2, 0.02);

  SUBCASE("zero gamma energy is the sum of chosen unaries") {
    GrabCutParams params;
    params.gamma = 0.0;
    Bitmap lab(3, 2);
    lab.at(0, 0) = 1;
    lab.at(2, 1) = 1;
    const auto e = grabcut_energy(img, lab, fg, bg, params);
    double expect = 0.0;
    std::vector<double> px(1);
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 3; ++x) {
        px[0] = img.at(x, y);
        expect += lab.at(x, y) ? neg_log_density(fg, px.data())
                               : neg_log_density(bg, px.data());
      }
    CHECK(e.total == doctest::Approx(expect).epsilon(1e-12));
    CHECK(e.smoothness_term == 0.0);
  }
  SUBCASE("uniform labeling has zero smoothness") {
    GrabCutParams params;
    Bitmap lab(3, 2, 1);
    const auto e = grabcut_energy(img, lab, fg, bg, params);
    CHECK(e.smoothness_term == 0.0);
  }
  SUBCASE("small instance equals independent summation") {
    GrabCutParams params;
    params.gamma = 7.0;
    params.connectivity = 8;
    Bitmap lab(3, 2);
    lab.at(1, 0) = 1;
    lab.at(1, 1) = 1;
    const auto e = grabcut_energy(img, lab, fg, bg, params);

    // Independent summation with explicit pair enumeration.
    const double beta = grabcut_beta(img, 8);
    double smooth = 0.0;
    const auto add_pair = [&](int x0, int y0, int x1, int y1, double dist) {
      if (lab.at(x0, y0) == lab.at(x1, y1)) return;
      const double d = img.at(x0, y0) - img.at(x1, y1);
      smooth += params.gamma * std::exp(-beta * d * d) / dist;
    };
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) add_pair(x, y, x + 1, y, 1.0);
    for (int x = 0; x < 3; ++x) add_pair(x, 0, x, 1, 1.0);
    add_pair(0, 0, 1, 1, std::numbers::sqrt2);
    add_pair(1, 0, 2, 1, std::numbers::sqrt2);
    add_pair(1, 0, 0, 1, std::numbers::sqrt2);
    add_pair(2, 0, 1, 1, std::numbers::sqrt2);
    CHECK(e.smoothness_term == doctest::Approx(smooth).epsilon(1e-12));
  }
}

TEST_CASE("constant image collapses beta to zero") {
  Image2D img(6, 6, 1, 0.42f);
  CHECK(grabcut_beta(img, 8) == 0.0);
  // And GrabCut still runs (pairwise constant gamma/dist).
  Trimap tri(6, 6, TrimapLabel::PBG);
  tri.at(2, 2) = TrimapLabel::FG;
  tri.at(3, 2) = TrimapLabel::PFG;
  tri.at(0, 0) = TrimapLabel::BG;
  GrabCutParams params;
  params.gmm_components = 1;
  const auto res = grabcut_run(img, tri, params);
  CHECK(res.mask.at(2, 2) == 1);
  CHECK(res.mask.at(0, 0) == 0);
}

TEST_CASE("cut attains the exhaustive minimum on tiny instances") {
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Image2D img(3, 3, 1);
    for (auto& v : img.data) v = static_cast<float>(u(rng));
    Trimap tri(3, 3, TrimapLabel::PFG);
    // One clamped FG and one clamped BG corner, 7 free pixels.
    tri.at(0, 0) = TrimapLabel::FG;
    tri.at(2, 2) = TrimapLabel::BG;
    tri.at(1, 2) = TrimapLabel::PBG;

    const auto fg = point_gaussian(0.5 + 0.4 * u(rng), 0.01 + 0.05 * u(rng));
    const auto bg = point_gaussian(0.4 * u(rng), 0.01 + 0.05 * u(rng));
    GrabCutParams params;
    params.gamma = 10.0 * u(rng);

    const Bitmap cut = grabcut_cut(img, tri, fg, bg, params);
    const double cut_energy = grabcut_energy(img, cut, fg, bg, params).total;

    // Exhaustive minimum over the 2^7 free assignments.
    std::vector<std::pair<int, int>> free_px;
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x)
        if (tri.at(x, y) != TrimapLabel::FG && tri.at(x, y) != TrimapLabel::BG)
          free_px.emplace_back(x, y);
    double best = std::numeric_limits<double>::infinity();
    for (unsigned bits = 0; bits < (1u << free_px.size()); ++bits) {
      Bitmap lab(3, 3);
      lab.at(0, 0) = 1;
      for (std::size_t i = 0; i < free_px.size(); ++i)
        lab.at(free_px[i].first, free_px[i].second) = bits >> i & 1;
      best = std::min(best,
                      grabcut_energy(img, lab, fg, bg, params).total);
    }
    CHECK(cut_energy == doctest::Approx(best).epsilon(1e-9));
  }
}

TEST_CASE("same seed reproduces the result") {
  const auto ph = disk_phantom(40, 9.0, 0.78f, 0.22f, 0.06, 5);
  const auto ann = cross_annotation({19.5, 19.5}, 18, 14);
  const Trimap tri = trimap_from_recist(ann, 40, 40);
  GrabCutParams params;
  params.seed = 31;
  const auto a = grabcut_run(ph.image, tri, params);
  const auto b = grabcut_run(ph.image, tri, params);
  CHECK(a.mask.data == b.mask.data);
  REQUIRE(a.energy_history.size() == b.energy_history.size());
  for (std::size_t i = 0; i < a.energy_history.size(); ++i)
    CHECK(a.energy_history[i].total == b.energy_history[i].total);
}

TEST_CASE("empty seed regions are rejected") {
  Image2D img(8, 8, 1, 0.5f);
  Trimap all_bg(8, 8, TrimapLabel::BG);
  GrabCutParams params;
  CHECK_THROWS_WITH_AS(grabcut_run(img, all_bg, params),
                       doctest::Contains("empty foreground"),
                       std::runtime_error);
  Trimap all_fg(8, 8, TrimapLabel::PFG);
  CHECK_THROWS_WITH_AS(grabcut_run(img, all_fg, params),
                       doctest::Contains("empty background"),
                       std::runtime_error);
}

}  // TEST_SUITE
