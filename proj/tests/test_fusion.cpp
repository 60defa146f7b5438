#include <doctest.h>

#include <cmath>

#include "guidedflow/fusion.hpp"
#include "test_util.hpp"

using namespace guidedflow;

TEST_CASE("fuse_hints: all-background output equals the ego hints") {
  std::mt19937_64 rng(51);
  const SparseHints ego = canonicalize(test::random_hints(rng, 8, 6));
  const FlowField ric = test::random_flow(rng, 8, 6, 5.0, 1.0);
  const PlaneB mask = PlaneB::Constant(6, 8, true);
  const SparseHints fused = fuse_hints(ego, ric, mask, SegmentationMask::background(8, 6));
  CHECK((fused.hx == ego.hx).all());
  CHECK((fused.hy == ego.hy).all());
  CHECK((fused.v == ego.v).all());
}

TEST_CASE("fuse_hints: all-foreground takes estimator flow at ego-valid pixels") {
  std::mt19937_64 rng(52);
  const SparseHints ego = canonicalize(test::random_hints(rng, 8, 6));
  const FlowField ric = test::random_flow(rng, 8, 6, 5.0, 1.0);
  const PlaneB mask = PlaneB::Constant(6, 8, true);
  SegmentationMask seg = SegmentationMask::background(8, 6);
  seg.id.setConstant(1);
  const SparseHints fused = fuse_hints(ego, ric, mask, seg);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 8; ++x) {
      CHECK(fused.v(y, x) == ego.v(y, x));
      if (fused.v(y, x)) {
        CHECK(fused.hx(y, x) == ric.u(y, x));
        CHECK(fused.hy(y, x) == ric.v(y, x));
      }
    }
}

TEST_CASE("fuse_hints: per-pixel branch matches a scalar oracle") {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 100; ++trial) {
    const int w = 3 + static_cast<int>(uniform_below(rng, 4));
    const int h = 2 + static_cast<int>(uniform_below(rng, 4));
    const SparseHints ego = canonicalize(test::random_hints(rng, w, h, 4.0, 0.6));
    const FlowField ric = test::random_flow(rng, w, h, 4.0, 0.9);
    PlaneB mask(h, w);
    SegmentationMask seg = SegmentationMask::background(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        mask(y, x) = uniform01(rng) < 0.7;
        seg.id(y, x) = uniform01(rng) < 0.5 ? 0 : 1 + static_cast<std::uint16_t>(uniform_below(rng, 3));
      }
    const SparseHints fused = fuse_hints(ego, ric, mask, seg);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (seg.id(y, x) == 0) {
          CHECK(fused.v(y, x) == ego.v(y, x));
          if (fused.v(y, x)) {
            CHECK(fused.hx(y, x) == ego.hx(y, x));
            CHECK(fused.hy(y, x) == ego.hy(y, x));
          }
        } else {
          const bool expect = mask(y, x) && ego.v(y, x) && ric.valid(y, x);
          CHECK(fused.v(y, x) == expect);
          if (expect) {
            CHECK(fused.hx(y, x) == ric.u(y, x));
            CHECK(fused.hy(y, x) == ric.v(y, x));
          }
        }
        if (!fused.v(y, x)) {
          CHECK(fused.hx(y, x) == 0.0f);
          CHECK(fused.hy(y, x) == 0.0f);
        }
      }
  }
}

TEST_CASE("fuse_hints: validity never exceeds the ego support") {
  std::mt19937_64 rng(54);
  for (int trial = 0; trial < 50; ++trial) {
    const SparseHints ego = canonicalize(test::random_hints(rng, 7, 7, 4.0, 0.4));
    const FlowField ric = test::random_flow(rng, 7, 7, 4.0, 1.0);
    PlaneB mask(7, 7);
    SegmentationMask seg = SegmentationMask::background(7, 7);
    for (int y = 0; y < 7; ++y)
      for (int x = 0; x < 7; ++x) {
        mask(y, x) = uniform01(rng) < 0.8;
        seg.id(y, x) = uniform01(rng) < 0.5 ? 0 : 2;
      }
    const SparseHints fused = fuse_hints(ego, ric, mask, seg);
    for (int y = 0; y < 7; ++y)
      for (int x = 0; x < 7; ++x)
        if (fused.v(y, x)) CHECK(ego.v(y, x));
  }
}

TEST_CASE("fuse_hints shape check") {
  const SparseHints ego = SparseHints::none(4, 4);
  const FlowField ric = FlowField::zeros(4, 4, true);
  const PlaneB mask = PlaneB::Constant(4, 4, true);
  CHECK_THROWS_AS(fuse_hints(ego, ric, mask, SegmentationMask::background(5, 4)), ShapeError);
}

TEST_CASE("sample_gt_hints: full density with zero noise reproduces the field") {
  std::mt19937_64 rng(55);
  const FlowField gt = test::random_flow(rng, 10, 10, 20.0, 0.7);
  const SparseHints hints = sample_gt_hints(gt, 1.0, 0.0, 99);
  CHECK((hints.v == gt.valid).all());
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x)
      if (gt.valid(y, x)) {
        CHECK(hints.hx(y, x) == gt.u(y, x));
        CHECK(hints.hy(y, x) == gt.v(y, x));
      }
}

TEST_CASE("sample_gt_hints: exact count at 3% of a fully valid 100x100 field") {
  std::mt19937_64 rng(56);
  const FlowField gt = test::random_flow(rng, 100, 100, 20.0, 1.0);
  const SparseHints hints = sample_gt_hints(gt, 0.03, 3.0, 5);
  CHECK(hints.v.count() == 300);
}

TEST_CASE("sample_gt_hints: noise stays within its bound") {
  std::mt19937_64 rng(57);
  const FlowField gt = test::random_flow(rng, 40, 40, 10.0, 1.0);
  const SparseHints hints = sample_gt_hints(gt, 0.5, 3.0, 17);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x)
      if (hints.v(y, x)) {
        CHECK(std::abs(hints.hx(y, x) - gt.u(y, x)) <= 3.0f + 1e-5f);
        CHECK(std::abs(hints.hy(y, x) - gt.v(y, x)) <= 3.0f + 1e-5f);
      }
}

TEST_CASE("sample_gt_hints is bit-reproducible per seed") {
  std::mt19937_64 rng(58);
  const FlowField gt = test::random_flow(rng, 30, 30, 10.0, 0.9);
  const SparseHints a = sample_gt_hints(gt, 0.1, 2.0, 1234);
  const SparseHints b = sample_gt_hints(gt, 0.1, 2.0, 1234);
  CHECK((a.hx == b.hx).all());
  CHECK((a.hy == b.hy).all());
  CHECK((a.v == b.v).all());
  const SparseHints c = sample_gt_hints(gt, 0.1, 2.0, 1235);
  CHECK_FALSE((a.v == c.v).all());
}

TEST_CASE("sample_gt_hints: no valid ground truth is an EmptyInput") {
  CHECK_THROWS_AS(sample_gt_hints(FlowField::zeros(5, 5, false), 0.1, 1.0, 0), EmptyInput);
  CHECK_THROWS_AS(sample_gt_hints(FlowField::zeros(5, 5, true), 0.0, 1.0, 0), ConfigError);
  CHECK_THROWS_AS(sample_gt_hints(FlowField::zeros(5, 5, true), 0.1, -1.0, 0), ConfigError);
}

TEST_CASE("sample_gt_hints: mean hint error approaches the analytic value") {
  // E|eps|_2 for i.i.d. Uniform[-3,3]^2 noise: 3 * (sqrt(2) + asinh(1)) / 3.
  const double expected = std::sqrt(2.0) + std::asinh(1.0);  // 2.29558714939...
  std::mt19937_64 rng(59);
  const FlowField gt = test::random_flow(rng, 500, 500, 30.0, 1.0);
  const SparseHints hints = sample_gt_hints(gt, 0.03, 3.0, 4242);
  double sum = 0.0;
  int n = 0;
  for (int y = 0; y < 500; ++y)
    for (int x = 0; x < 500; ++x)
      if (hints.v(y, x)) {
        const double du = hints.hx(y, x) - gt.u(y, x);
        const double dv = hints.hy(y, x) - gt.v(y, x);
        sum += std::sqrt(du * du + dv * dv);
        ++n;
      }
  CHECK(n == 7500);
  CHECK(sum / n == doctest::Approx(expected).epsilon(0.02));
}

TEST_CASE("hint_stats: perfect hints give zero errors") {
  std::mt19937_64 rng(60);
  const FlowField gt = test::random_flow(rng, 10, 10, 20.0, 1.0);
  SparseHints hints;
  hints.hx = gt.u;
  hints.hy = gt.v;
  hints.v = gt.valid;
  const HintStats stats = hint_stats(hints, gt);
  CHECK(stats.epe == 0.0);
  CHECK(stats.fl == 0.0);
  CHECK(stats.density == 100.0);
}

TEST_CASE("hint_stats: a single (3,4) error on gt (10,0) is a 5 px outlier") {
  FlowField gt = FlowField::zeros(1, 1, true);
  gt.u(0, 0) = 10.0f;
  SparseHints hints = SparseHints::none(1, 1);
  hints.v(0, 0) = true;
  hints.hx(0, 0) = 13.0f;
  hints.hy(0, 0) = 4.0f;
  const HintStats stats = hint_stats(hints, gt);
  CHECK(stats.epe == doctest::Approx(5.0).epsilon(1e-9));
  CHECK(stats.fl == 100.0);  // 5 > 3 and 5 > 0.05 * 10
}

TEST_CASE("hint_stats: 300 hints on a fully valid 100x100 field is 3%") {
  std::mt19937_64 rng(61);
  const FlowField gt = test::random_flow(rng, 100, 100, 20.0, 1.0);
  const SparseHints hints = sample_gt_hints(gt, 0.03, 0.0, 3);
  CHECK(hint_stats(hints, gt).density == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("hint_stats: empty intersection is an EmptyInput") {
  const FlowField gt = FlowField::zeros(4, 4, true);
  CHECK_THROWS_AS(hint_stats(SparseHints::none(4, 4), gt), EmptyInput);
}

TEST_CASE("hints_from_flow restricts to the given mask") {
  std::mt19937_64 rng(62);
  const FlowField flow = test::random_flow(rng, 6, 6, 4.0, 1.0);
  PlaneB mask = PlaneB::Constant(6, 6, false);
  mask(2, 3) = true;
  const SparseHints hints = hints_from_flow(flow, mask);
  CHECK(hints.v.count() == 1);
  CHECK(hints.hx(2, 3) == flow.u(2, 3));
  CHECK(hints.hx(0, 0) == 0.0f);
}
