#include <doctest.h>

#include <cmath>

#include "mdepth/experiments.hpp"
#include "mdepth/metrics.hpp"
#include "mdepth/rng.hpp"

using namespace mdepth;

namespace {

struct Maps {
  Tensor4<double> pred, gt;
  MaskMap mask;
};

Maps random_maps(Rng& rng, int n, int h, int w, double mask_rate = 1.0) {
  Maps m{Tensor4<double>(n, 1, h, w), Tensor4<double>(n, 1, h, w), MaskMap(n, 1, h, w)};
  for (int i = 0; i < n; ++i)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        m.gt(i, 0, y, x) = std::exp(rng.uniform(std::log(0.5), std::log(8.0)));
        m.pred(i, 0, y, x) = std::exp(rng.uniform(std::log(0.5), std::log(8.0)));
        m.mask(i, 0, y, x) = rng.uniform() < mask_rate ? 1 : 0;
      }
  m.mask(0, 0, 0, 0) = 1;
  return m;
}

}  // namespace

TEST_CASE("compute_metrics identities") {
  Rng rng(61);
  Maps m = random_maps(rng, 2, 6, 6);

  SUBCASE("pred == gt") {
    const MetricSet r = compute_metrics(m.gt, m.gt, m.mask);
    CHECK(r.delta1 == 1.0);
    CHECK(r.delta2 == 1.0);
    CHECK(r.delta3 == 1.0);
    CHECK(r.rel == 0.0);
    CHECK(r.log10e == 0.0);
    CHECK(r.rms == 0.0);
  }

  SUBCASE("pred = 1.3 * gt") {
    Tensor4<double> pred = m.gt;
    pred.array() *= 1.3;
    const MetricSet r = compute_metrics(pred, m.gt, m.mask);
    CHECK(r.delta1 == 0.0);  // 1.3 >= 1.25
    CHECK(r.delta2 == 1.0);  // 1.3 < 1.5625
    CHECK(r.delta3 == 1.0);
    CHECK(r.rel == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(r.log10e == doctest::Approx(std::log10(1.3)).epsilon(1e-12));
  }

  SUBCASE("delta symmetry under pred/gt swap") {
    const MetricSet a = compute_metrics(m.pred, m.gt, m.mask);
    const MetricSet b = compute_metrics(m.gt, m.pred, m.mask);
    CHECK(a.delta1 == b.delta1);
    CHECK(a.delta2 == b.delta2);
    CHECK(a.delta3 == b.delta3);
    CHECK(a.rms == doctest::Approx(b.rms).epsilon(1e-12));
    CHECK(a.delta1 <= a.delta2);
    CHECK(a.delta2 <= a.delta3);
  }

  SUBCASE("scaling both maps by c scales rms only") {
    const MetricSet a = compute_metrics(m.pred, m.gt, m.mask);
    Tensor4<double> p2 = m.pred, g2 = m.gt;
    p2.array() *= 2.5;
    g2.array() *= 2.5;
    const MetricSet b = compute_metrics(p2, g2, m.mask);
    CHECK(b.delta1 == a.delta1);
    CHECK(b.rel == doctest::Approx(a.rel).epsilon(1e-12));
    CHECK(b.log10e == doctest::Approx(a.log10e).epsilon(1e-9));
    CHECK(b.rms == doctest::Approx(2.5 * a.rms).epsilon(1e-12));
  }

  SUBCASE("cap equals explicit pre-filtering") {
    const double cap = 4.0;
    const MetricSet a = compute_metrics(m.pred, m.gt, m.mask, cap);
    MaskMap filtered = m.mask;
    for (int i = 0; i < 2; ++i)
      for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x)
          if (m.gt(i, 0, y, x) > cap) filtered(i, 0, y, x) = 0;
    const MetricSet b = compute_metrics(m.pred, m.gt, filtered);
    CHECK(a.count == b.count);
    CHECK(a.delta1 == b.delta1);
    CHECK(a.rel == b.rel);
    CHECK(a.rms == b.rms);
  }

  SUBCASE("zero evaluable pixels is an error") {
    MaskMap none(2, 1, 6, 6);
    CHECK_THROWS(compute_metrics(m.pred, m.gt, none));
    CHECK_THROWS(compute_metrics(m.pred, m.gt, m.mask, 0.01));  // cap excludes everything
  }
}

TEST_CASE("threshold accuracy is monotone in the threshold") {
  Rng rng(62);
  Maps m = random_maps(rng, 1, 8, 8, 0.8);
  const MetricSet r = compute_metrics(m.pred, m.gt, m.mask);
  CHECK(r.delta1 <= r.delta2);
  CHECK(r.delta2 <= r.delta3);
  CHECK(r.delta3 <= 1.0);
}

TEST_CASE("pixel accuracy") {
  LabelMap a(1, 4, 4), b(1, 4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      a.at(0, y, x) = y * 4 + x;
      b.at(0, y, x) = y * 4 + x;
    }
  CHECK(pixel_accuracy(a, b) == 1.0);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) b.at(0, y, x) = a.at(0, y, x) + 1;
  CHECK(pixel_accuracy(a, b) == 0.0);
  b.at(0, 2, 2) = a.at(0, 2, 2);
  a.at(0, 0, 0) = LabelMap::kIgnore;
  CHECK(pixel_accuracy(b, a) == doctest::Approx(1.0 / 15.0));
  LabelMap all_ignored(1, 4, 4);
  CHECK_THROWS(pixel_accuracy(a, all_ignored));
}

TEST_CASE("confusion matrix counting and merging") {
  SUBCASE("perfect predictions are purely diagonal") {
    LabelMap a(1, 5, 5);
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 5; ++x) a.at(0, y, x) = (y * 5 + x) % 8;
    const ConfusionMatrix m = confusion(a, a, 8);
    CHECK(m.total() == 25);
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c)
        if (r != c) CHECK(m.at(r, c) == 0);
    CHECK(m.near_diagonal_mass(0) == 1.0);
    CHECK(m.asymmetry() == 0.0);
  }

  SUBCASE("merge 4 on 200 bins conserves the total") {
    Rng rng(63);
    LabelMap gt(1, 40, 40), pred(1, 40, 40);
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 40; ++x) {
        gt.at(0, y, x) = rng.uniform_int(200);
        pred.at(0, y, x) = rng.uniform_int(200);
      }
    const ConfusionMatrix full = confusion(pred, gt, 200);
    const ConfusionMatrix merged = confusion(pred, gt, 200, 4);
    CHECK(merged.k == 50);
    CHECK(merged.total() == full.total());
    CHECK_THROWS(confusion(pred, gt, 200, 3));  // 3 does not divide 200
  }

  SUBCASE("uniform random predictions give near-uniform rows") {
    Rng rng(64);
    const int k = 8, n = 80000;
    LabelMap gt(1, 1, n), pred(1, 1, n);
    for (int i = 0; i < n; ++i) {
      gt.at(0, 0, i) = rng.uniform_int(k);
      pred.at(0, 0, i) = rng.uniform_int(k);
    }
    const ConfusionMatrix m = confusion(pred, gt, k);
    const double expect = static_cast<double>(n) / (k * k);
    for (int r = 0; r < k; ++r)
      for (int c = 0; c < k; ++c) {
        CHECK(m.at(r, c) > expect * 0.8);
        CHECK(m.at(r, c) < expect * 1.2);
      }
  }
}

TEST_CASE("bins_sweep emits one row per K") {
  SceneSpec spec;
  spec.width = 16;
  spec.height = 16;
  std::vector<Sample> train_set, test_set;
  for (int i = 0; i < 2; ++i) {
    spec.seed = 300 + static_cast<std::uint64_t>(i);
    train_set.push_back(generate_scene(spec));
    spec.seed = 400 + static_cast<std::uint64_t>(i);
    test_set.push_back(generate_scene(spec));
  }
  TrainConfig cfg;
  cfg.arch.stem_channels = 4;
  cfg.arch.blocks_per_stage = 1;
  cfg.arch.k = 8;
  cfg.binning = make_binning(0.5, 8.0, 8);
  cfg.total_iters = 8;
  cfg.fixed_iters = 8;
  cfg.augment = false;

  const auto rows = bins_sweep<float>(train_set, test_set, {6}, cfg);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].k == 6);
  CHECK(rows[0].pixel_acc >= 0.0);
  CHECK(rows[0].pixel_acc <= 1.0);
  CHECK(rows[0].rel >= 0.0);
}
