#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <stdexcept>

#include "lesionseg/appearance.hpp"

using namespace lesionseg;

namespace {

// Two-level separable image: bright blob on dark ground.
TrainItem separable_item(int side, std::uint64_t seed, double noise = 0.02) {
  TrainItem item;
  item.image = Image2D(side, side, 1);
  item.labels = Bitmap(side, side);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, noise);
  const double c = (side - 1) / 2.0, r = side / 4.0;
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const bool in = (x - c) * (x - c) + (y - c) * (y - c) <= r * r;
      item.labels.at(x, y) = in ? 1 : 0;
      item.image.at(x, y) = static_cast<float>(
          std::clamp((in ? 0.85 : 0.15) + n(rng), 0.0, 1.0));
    }
  return item;
}

AppearanceModel zero_model(const FeatureConfig& cfg, int channels = 1) {
  AppearanceModel m;
  m.features = cfg;
  m.channels = channels;
  m.weights.assign(cfg.feature_dim(channels), 0.0);
  m.bias = 0.0;
  return m;
}

double accuracy(const AppearanceModel& m, const TrainItem& item) {
  const Image2D prob = predict_map(m, item.image);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < prob.data.size(); ++i)
    hit += (prob.data[i] >= 0.5f) == (item.labels.data[i] != 0);
  return static_cast<double>(hit) / prob.data.size();
}

}  // namespace

TEST_SUITE("appearance") {

TEST_CASE("feature extraction basics") {
  FeatureConfig cfg;

  SUBCASE("constant image: stds zero, means equal the constant") {
    Image2D img(16, 16, 1, 0.37f);
    const Image2D f = extract_features(img, cfg);
    CHECK(f.channels == cfg.feature_dim(1));
    for (int px = 0; px < 16 * 16; ++px) {
      CHECK(f.data[px * f.channels + 0] == doctest::Approx(0.37f));
      for (std::size_t r = 0; r < cfg.radii.size(); ++r) {
        CHECK(f.data[px * f.channels + 1 + 2 * r] ==
              doctest::Approx(0.37).epsilon(1e-6));
        CHECK(f.data[px * f.channels + 2 + 2 * r] ==
              doctest::Approx(0.0).epsilon(1e-5));
      }
    }
  }
  SUBCASE("single bright pixel: hand-computed 3x3 mean") {
    FeatureConfig small;
    small.radii = {1};
    Image2D img(9, 9, 1, 0.0f);
    img.at(4, 4) = 1.0f;
    const Image2D f = extract_features(img, small);
    // mean over the 3x3 window centered at the bright pixel = 1/9.
    CHECK(f.at(4, 4, 1) == doctest::Approx(1.0 / 9.0).epsilon(1e-6));
    // neighbors see the same window sum; their mean is also 1/9, further
    // pixels see 0. The bright pixel has the maximal raw feature.
    CHECK(f.at(0, 0, 1) == doctest::Approx(0.0));
    CHECK(f.at(4, 4, 0) == doctest::Approx(1.0));
  }
  SUBCASE("feature dim counts channels and radii") {
    CHECK(cfg.feature_dim(1) == 1 + 2 * 3);
    CHECK(cfg.feature_dim(3) == 3 * (1 + 2 * 3));
  }
  SUBCASE("bad radii rejected") {
    FeatureConfig bad;
    bad.radii = {2, 2};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  }
}

TEST_CASE("loss closed forms") {
  FeatureConfig cfg;
  cfg.radii = {1};
  TrainItem item;
  item.image = Image2D(4, 4, 1, 0.5f);
  item.labels = Bitmap(4, 4);
  for (int x = 0; x < 4; ++x) item.labels.at(x, 0) = 1;

  SUBCASE("uniform 0.5 prediction gives ln 2 regardless of labels") {
    const auto m = zero_model(cfg);
    CHECK(appearance_loss(m, {item}) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("near-perfect prediction gives near-zero loss") {
    auto m = zero_model(cfg);
    // All labels 1, huge bias -> yhat ~ 1.
    TrainItem all_fg = item;
    all_fg.labels = Bitmap(4, 4, 1);
    m.bias = 100.0;  // clamped to 30 inside
    CHECK(appearance_loss(m, {all_fg}) < 1e-9);
  }
  SUBCASE("outer mean over items") {
    TrainItem other = item;
    other.image = Image2D(4, 4, 1, 0.9f);
    auto m = zero_model(cfg);
    m.weights[0] = 2.0;
    const double a = appearance_loss(m, {item});
    const double b = appearance_loss(m, {other});
    CHECK(appearance_loss(m, {item, other}) ==
          doctest::Approx((a + b) / 2.0).epsilon(1e-12));
  }
  SUBCASE("all pixels ignored is an error") {
    TrainItem bad = item;
    bad.ignore = Bitmap(4, 4, 1);
    const auto m = zero_model(cfg);
    CHECK_THROWS_AS(appearance_loss(m, {bad}), std::runtime_error);
  }
}

TEST_CASE("gradient matches central finite differences") {
  std::mt19937_64 rng(555);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  FeatureConfig cfg;
  cfg.radii = {1};

  for (int trial = 0; trial < 20; ++trial) {
    TrainItem item;
    item.image = Image2D(6, 6, 1);
    item.labels = Bitmap(6, 6);
    item.ignore = Bitmap(6, 6);
    for (auto& v : item.image.data)
      v = static_cast<float>(0.5 + 0.4 * u(rng));
    for (auto& l : item.labels.data) l = u(rng) > 0 ? 1 : 0;
    item.ignore.at(1, 1) = 1;  // exercise the ignore path

    AppearanceModel m = zero_model(cfg);
    for (auto& w : m.weights) w = u(rng);
    m.bias = u(rng);

    const auto grad = appearance_grad(m, {item});
    const double h = 1e-5;
    for (std::size_t j = 0; j <= m.weights.size(); ++j) {
      AppearanceModel plus = m, minus = m;
      if (j < m.weights.size()) {
        plus.weights[j] += h;
        minus.weights[j] -= h;
      } else {
        plus.bias += h;
        minus.bias -= h;
      }
      const double fd =
          (appearance_loss(plus, {item}) - appearance_loss(minus, {item})) /
          (2.0 * h);
      const double denom = std::max(std::abs(fd), 1e-8);
      CHECK(std::abs(grad[j] - fd) / denom < 1e-4);
    }
  }
}

TEST_CASE("gradient invariances") {
  FeatureConfig cfg;
  cfg.radii = {1};
  SUBCASE("duplicated item leaves the gradient unchanged") {
    const TrainItem item = separable_item(12, 3);
    AppearanceModel m = zero_model(cfg);
    m.weights[0] = 0.3;
    const auto g1 = appearance_grad(m, {item});
    const auto g2 = appearance_grad(m, {item, item});
    for (std::size_t j = 0; j < g1.size(); ++j)
      CHECK(g1[j] == doctest::Approx(g2[j]).epsilon(1e-12));
  }
  SUBCASE("balanced labels with identical features zero the bias gradient") {
    TrainItem item;
    item.image = Image2D(2, 1, 1, 0.5f);
    item.labels = Bitmap(2, 1);
    item.labels.at(0, 0) = 1;  // one positive, one negative, same features
    const auto m = zero_model(cfg);
    const auto g = appearance_grad(m, {item});
    CHECK(g.back() == doctest::Approx(0.0).epsilon(1e-15));
  }
}

TEST_CASE("training on separable data") {
  const TrainItem item = separable_item(32, 11);
  FeatureConfig cfg;
  TrainParams params;
  // A single small item yields one update per epoch; give the optimizer
  // enough steps to separate cleanly.
  params.epochs = 150;
  params.seed = 8;

  const AppearanceModel m = train_appearance({item}, cfg, params);
  CHECK(accuracy(m, item) >= 0.99);
  REQUIRE(!m.meta.loss_curve.empty());
  CHECK(m.meta.loss_curve.back() <= 0.8 * std::log(2.0));  // >= 20% drop
  CHECK(m.meta.epochs_run == 150);
  CHECK_FALSE(m.meta.warm_start);
}

TEST_CASE("zero epochs returns the initial model") {
  const TrainItem item = separable_item(16, 2);
  FeatureConfig cfg;
  TrainParams params;
  params.epochs = 0;
  const AppearanceModel m = train_appearance({item}, cfg, params);
  for (double w : m.weights) CHECK(w == 0.0);
  CHECK(m.bias == 0.0);
  // And the zero model predicts 0.5 everywhere.
  const Image2D prob = predict_map(m, item.image);
  for (float p : prob.data) CHECK(p == doctest::Approx(0.5f));
}

TEST_CASE("fixed seed reproduces training bit for bit") {
  const TrainItem item = separable_item(24, 6);
  FeatureConfig cfg;
  TrainParams params;
  params.epochs = 10;
  params.seed = 77;
  const auto a = train_appearance({item}, cfg, params);
  const auto b = train_appearance({item}, cfg, params);
  CHECK(a.weights == b.weights);
  CHECK(a.bias == b.bias);
  CHECK(a.meta.loss_curve == b.meta.loss_curve);
}

TEST_CASE("full-batch descent is monotone on the convex objective") {
  const TrainItem item = separable_item(20, 4);
  FeatureConfig cfg;
  cfg.radii = {1};
  TrainParams params;
  params.epochs = 25;
  params.batch_pixels = 0;  // full batch
  params.momentum = 0.0;
  params.learning_rate = 0.5;
  const AppearanceModel m = train_appearance({item}, cfg, params);
  for (std::size_t e = 1; e < m.meta.loss_curve.size(); ++e)
    CHECK(m.meta.loss_curve[e] <= m.meta.loss_curve[e - 1] + 1e-6);
}

TEST_CASE("prediction stays strictly inside (0,1) and tracks features") {
  const TrainItem item = separable_item(24, 9);
  FeatureConfig cfg;
  TrainParams params;
  params.epochs = 200;
  params.seed = 4;
  const AppearanceModel m = train_appearance({item}, cfg, params);

  const Image2D held_out = separable_item(24, 1234).image;
  const Image2D prob = predict_map(m, held_out);
  for (float p : prob.data) {
    CHECK(p > 0.0f);
    CHECK(p < 1.0f);
  }
  // Held-out phantom dice of the 0.5-thresholded map.
  const TrainItem truth = separable_item(24, 1234);
  std::size_t inter = 0, a = 0, b = 0;
  for (std::size_t i = 0; i < prob.data.size(); ++i) {
    const bool pred = prob.data[i] >= 0.5f;
    inter += pred && truth.labels.data[i];
    a += pred;
    b += truth.labels.data[i];
  }
  CHECK(2.0 * inter / static_cast<double>(a + b) >= 0.8);

  // Monotone along the learned direction: brighter blob pixel scores higher
  // than background for this separable task.
  CHECK(prob.at(12, 12) > prob.at(1, 1));
}

TEST_CASE("channel mismatch is rejected") {
  FeatureConfig cfg;
  const auto m = zero_model(cfg, 1);
  Image2D rgb(8, 8, 3, 0.5f);
  CHECK_THROWS_WITH_AS(predict_map(m, rgb),
                       doctest::Contains("feature dimension mismatch"),
                       std::invalid_argument);
}

TEST_CASE("model json round trip") {
  const TrainItem item = separable_item(16, 5);
  FeatureConfig cfg;
  TrainParams params;
  params.epochs = 5;
  const AppearanceModel m = train_appearance({item}, cfg, params);
  const auto path =
      (std::filesystem::temp_directory_path() / "appearance_model.json").string();
  save_appearance_model(m, path);
  const AppearanceModel r = load_appearance_model(path);
  CHECK(r.weights == m.weights);
  CHECK(r.bias == m.bias);
  CHECK(r.channels == m.channels);
  CHECK(r.features.radii == m.features.radii);
  CHECK(r.meta.loss_curve == m.meta.loss_curve);
}

}  // TEST_SUITE
