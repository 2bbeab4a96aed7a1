#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "lesionseg/metrics.hpp"

using namespace lesionseg;

namespace {

Mask make_mask(std::array<int, 3> dims, std::array<double, 3> spacing = {1, 1, 1}) {
  Mask m;
  m.dims = dims;
  m.spacing_mm = spacing;
  m.data.assign(m.voxel_count(), 0);
  return m;
}

// Naive per-voxel enumeration oracle.
struct NaiveCounts {
  double tp = 0, fp = 0, fn = 0;
};

NaiveCounts enumerate_counts(const Mask& pred, const Mask& gt) {
  NaiveCounts c;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    if (pred.data[i] && gt.data[i]) c.tp += 1;
    if (pred.data[i] && !gt.data[i]) c.fp += 1;
    if (!pred.data[i] && gt.data[i]) c.fn += 1;
  }
  return c;
}

// O(n^2) AVD oracle over explicit boundary lists.
double brute_avd(const Mask& a, const Mask& b) {
  const auto boundary = [](const Mask& m) {
    std::vector<std::array<int, 3>> out;
    const auto bg = [&](int x, int y, int z) {
      if (x < 0 || y < 0 || z < 0 || x >= m.dims[0] || y >= m.dims[1] ||
          z >= m.dims[2])
        return true;
      return m.at(x, y, z) == 0;
    };
    for (int z = 0; z < m.dims[2]; ++z)
      for (int y = 0; y < m.dims[1]; ++y)
        for (int x = 0; x < m.dims[0]; ++x) {
          if (!m.at(x, y, z)) continue;
          bool edge = bg(x - 1, y, z) || bg(x + 1, y, z) || bg(x, y - 1, z) ||
                      bg(x, y + 1, z);
          if (m.dims[2] > 1) edge = edge || bg(x, y, z - 1) || bg(x, y, z + 1);
          if (edge) out.push_back({x, y, z});
        }
    return out;
  };
  const auto ba = boundary(a), bb = boundary(b);
  const auto directed = [&](const std::vector<std::array<int, 3>>& from,
                            const std::vector<std::array<int, 3>>& to) {
    double sum = 0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) {
        const double dx = (p[0] - q[0]) * a.spacing_mm[0];
        const double dy = (p[1] - q[1]) * a.spacing_mm[1];
        const double dz = (p[2] - q[2]) * a.spacing_mm[2];
        best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
      }
      sum += best;
    }
    return sum / static_cast<double>(from.size());
  };
  return std::max(directed(ba, bb), directed(bb, ba));
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("dice closed forms") {
  auto a = make_mask({4, 4, 1});
  auto b = make_mask({4, 4, 1});
  SUBCASE("identical non-empty masks") {
    a.data[5] = b.data[5] = 1;
    a.data[6] = b.data[6] = 1;
    CHECK(dice(a, b) == 1.0);
  }
  SUBCASE("disjoint non-empty masks") {
    a.data[0] = 1;
    b.data[15] = 1;
    CHECK(dice(a, b) == 0.0);
  }
  SUBCASE("both empty is perfect vacuous agreement") {
    CHECK(dice(a, b) == 1.0);
    CHECK(precision_recall(a, b) == std::pair<double, double>{1.0, 1.0});
    CHECK(volumetric_similarity(a, b) == 1.0);
  }
  SUBCASE("dim mismatch rejected") {
    const auto c = make_mask({4, 4, 2});
    CHECK_THROWS_AS(dice(a, c), std::invalid_argument);
  }
}

TEST_CASE("counting metrics: TP=50 FP=10 FN=10") {
  auto pred = make_mask({10, 10, 1});
  auto gt = make_mask({10, 10, 1});
  for (int i = 0; i < 50; ++i) pred.data[i] = gt.data[i] = 1;   // TP
  for (int i = 50; i < 60; ++i) pred.data[i] = 1;               // FP
  for (int i = 60; i < 70; ++i) gt.data[i] = 1;                 // FN
  CHECK(dice(pred, gt) == doctest::Approx(100.0 / 120.0).epsilon(1e-12));
  const auto [p, r] = precision_recall(pred, gt);
  CHECK(p == doctest::Approx(50.0 / 60.0).epsilon(1e-12));
  CHECK(r == doctest::Approx(50.0 / 60.0).epsilon(1e-12));
}

TEST_CASE("volumetric similarity formula") {
  SUBCASE("symmetric errors give exactly 1") {
    auto pred = make_mask({10, 10, 1});
    auto gt = make_mask({10, 10, 1});
    for (int i = 0; i < 30; ++i) pred.data[i] = gt.data[i] = 1;
    pred.data[40] = 1;  // FP
    gt.data[50] = 1;    // FN
    CHECK(volumetric_similarity(pred, gt) == doctest::Approx(1.0));
  }
  SUBCASE("TP=50 FP=0 FN=20") {
    auto pred = make_mask({10, 10, 1});
    auto gt = make_mask({10, 10, 1});
    for (int i = 0; i < 50; ++i) pred.data[i] = gt.data[i] = 1;
    for (int i = 50; i < 70; ++i) gt.data[i] = 1;
    CHECK(volumetric_similarity(pred, gt) ==
          doctest::Approx(1.0 - 20.0 / 120.0).epsilon(1e-12));
  }
  SUBCASE("over-coverage exceeds 1") {
    auto pred = make_mask({12, 12, 1});
    auto gt = make_mask({12, 12, 1});
    for (int i = 0; i < 100; ++i) pred.data[i] = gt.data[i] = 1;
    for (int i = 100; i < 120; ++i) pred.data[i] = 1;  // FP=20
    CHECK(volumetric_similarity(pred, gt) ==
          doctest::Approx(1.0 + 20.0 / 220.0).epsilon(1e-12));
  }
}

TEST_CASE("averaged Hausdorff distance") {
  SUBCASE("identical masks give zero") {
    auto a = make_mask({8, 8, 3});
    for (int z = 0; z < 3; ++z)
      for (int y = 2; y < 6; ++y)
        for (int x = 2; x < 6; ++x) a.at(x, y, z) = 1;
    CHECK(avg_hausdorff(a, a) == doctest::Approx(0.0));
  }
  SUBCASE("two single voxels 3 mm apart") {
    auto a = make_mask({8, 8, 1}, {1.5, 1.0, 1.0});
    auto b = make_mask({8, 8, 1}, {1.5, 1.0, 1.0});
    a.at(1, 1, 0) = 1;
    b.at(3, 1, 0) = 1;  // 2 px * 1.5 mm = 3 mm
    CHECK(avg_hausdorff(a, b) == doctest::Approx(3.0).epsilon(1e-12));
  }
  SUBCASE("square vs shifted square matches brute force") {
    auto a = make_mask({16, 16, 1});
    auto b = make_mask({16, 16, 1});
    for (int y = 4; y < 10; ++y)
      for (int x = 4; x < 10; ++x) {
        a.at(x, y, 0) = 1;
        b.at(x + 1, y, 0) = 1;
      }
    CHECK(avg_hausdorff(a, b) == doctest::Approx(brute_avd(a, b)).epsilon(1e-9));
  }
  SUBCASE("empty mask is an error") {
    auto a = make_mask({4, 4, 1});
    auto b = make_mask({4, 4, 1});
    b.at(1, 1, 0) = 1;
    CHECK_THROWS_WITH_AS(avg_hausdorff(a, b), doctest::Contains("AVD"),
                         std::runtime_error);
  }
  SUBCASE("symmetry and random agreement with brute force") {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> c(2, 13);
    std::uniform_int_distribution<int> r(1, 4);
    for (int trial = 0; trial < 10; ++trial) {
      auto a = make_mask({16, 16, 4}, {1.0, 0.8, 2.5});
      auto b = make_mask({16, 16, 4}, {1.0, 0.8, 2.5});
      const int ax = c(rng), ay = c(rng), ar = r(rng);
      const int bx = c(rng), by = c(rng), br = r(rng);
      for (int z = 0; z < 4; ++z)
        for (int y = 0; y < 16; ++y)
          for (int x = 0; x < 16; ++x) {
            if ((x - ax) * (x - ax) + (y - ay) * (y - ay) <= ar * ar)
              a.at(x, y, z) = 1;
            if ((x - bx) * (x - bx) + (y - by) * (y - by) <= br * br)
              b.at(x, y, z) = 1;
          }
      const double ab = avg_hausdorff(a, b);
      CHECK(ab == doctest::Approx(avg_hausdorff(b, a)).epsilon(1e-12));
      CHECK(ab == doctest::Approx(brute_avd(a, b)).epsilon(1e-9));
    }
  }
}

TEST_CASE("ellipsoid volume formula") {
  CHECK(ellipsoid_volume(0.0, 0.0) == 0.0);
  CHECK(ellipsoid_volume(6.0, 4.0) ==
        doctest::Approx(16.0 * std::numbers::pi).epsilon(1e-9));
  // Sphere d = 2r reduces to (4/3) pi r^3.
  const double r = 3.7;
  CHECK(ellipsoid_volume(2 * r, 2 * r) ==
        doctest::Approx(4.0 / 3.0 * std::numbers::pi * r * r * r).epsilon(1e-12));
  CHECK_THROWS_AS(ellipsoid_volume(-1.0, 2.0), std::invalid_argument);
}

TEST_CASE("volume change report") {
  SUBCASE("method equal to reference gives slope 1, r2 1") {
    std::vector<VolumePairSample> ref{{100, 150}, {200, 180}, {50, 90}};
    const auto rep = volume_change_report(ref, ref);
    CHECK(rep.slope == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.intercept == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(rep.r2 == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("damped method deltas give slope below 1") {
    std::vector<VolumePairSample> ref{{100, 160}, {200, 190}, {50, 120}};
    std::vector<VolumePairSample> method;
    for (const auto& p : ref)
      method.push_back({p.baseline_mm3,
                        p.baseline_mm3 + 0.3 * (p.followup_mm3 - p.baseline_mm3)});
    const auto rep = volume_change_report(ref, method);
    CHECK(rep.slope == doctest::Approx(0.3).epsilon(1e-9));
  }
  SUBCASE("single pair is an error") {
    std::vector<VolumePairSample> one{{10, 20}};
    CHECK_THROWS_AS(volume_change_report(one, one), std::invalid_argument);
  }
}

TEST_CASE("random mask pairs match the enumeration oracle exactly") {
  std::mt19937_64 rng(1234);
  std::uniform_int_distribution<int> side(4, 20);
  std::uniform_real_distribution<double> p(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const std::array<int, 3> dims{side(rng), side(rng), side(rng) % 6 + 1};
    auto a = make_mask(dims);
    auto b = make_mask(dims);
    for (std::size_t i = 0; i < a.data.size(); ++i) {
      a.data[i] = p(rng) < 0.3 ? 1 : 0;
      b.data[i] = p(rng) < 0.3 ? 1 : 0;
    }
    const auto c = enumerate_counts(a, b);
    const double denom = 2 * c.tp + c.fp + c.fn;
    if (denom > 0) {
      CHECK(dice(a, b) == doctest::Approx(2 * c.tp / denom).epsilon(1e-12));
      CHECK(volumetric_similarity(a, b) ==
            doctest::Approx(1.0 - (c.fn - c.fp) / denom).epsilon(1e-12));
    }
    CHECK(dice(a, b) == doctest::Approx(dice(b, a)).epsilon(1e-15));
    CHECK(dice(a, b) >= 0.0);
    CHECK(dice(a, b) <= 1.0);
  }
}

}  // TEST_SUITE
