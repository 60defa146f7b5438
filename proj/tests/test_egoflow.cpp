#include <doctest.h>

#include <cmath>

#include "guidedflow/egoflow.hpp"
#include "guidedflow/fusion.hpp"
#include "guidedflow/scene.hpp"
#include "test_util.hpp"

using namespace guidedflow;

namespace {

constexpr double kDeg = 3.14159265358979323846 / 180.0;

DepthMap constant_depth(int w, int h, double z) {
  DepthMap d = DepthMap::invalid(w, h);
  d.z.setConstant(z);
  d.valid.setConstant(true);
  return d;
}

std::vector<Correspondence> synthesize_correspondences(std::mt19937_64& rng,
                                                       const CameraIntrinsics& K,
                                                       const RigidPose& pose, int count,
                                                       double pixel_noise, double outlier_frac) {
  std::vector<Correspondence> corrs;
  corrs.reserve(static_cast<std::size_t>(count));
  const int n_outliers = static_cast<int>(std::lround(outlier_frac * count));
  for (int i = 0; i < count; ++i) {
    Correspondence c;
    c.p0 = {uniform_real(rng, 20.0, 620.0), uniform_real(rng, 20.0, 460.0)};
    c.z0 = uniform_real(rng, 2.0, 10.0);
    const Eigen::Vector3d p1 = pose.rotation * back_project(K, c.p0, c.z0) + pose.translation;
    c.p1 = project(K, p1);
    if (i < n_outliers) {
      c.p1 += Eigen::Vector2d(uniform_real(rng, 20.0, 120.0) * (uniform01(rng) < 0.5 ? -1 : 1),
                              uniform_real(rng, 20.0, 120.0) * (uniform01(rng) < 0.5 ? -1 : 1));
    } else if (pixel_noise > 0.0) {
      c.p1 += Eigen::Vector2d(uniform_real(rng, -pixel_noise, pixel_noise),
                              uniform_real(rng, -pixel_noise, pixel_noise));
    }
    corrs.push_back(c);
  }
  return corrs;
}

double rotation_angle_deg(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) / kDeg;
}

}  // namespace

TEST_CASE("ego_flow: identity pose maps to exactly zero flow") {
  DepthMap d = constant_depth(8, 6, 3.0);
  d.valid(2, 2) = false;
  const CameraIntrinsics K{150.0, 150.0, 3.5, 2.5};
  const FlowField flow = ego_flow(d, K, RigidPose::identity());
  CHECK((flow.u == 0.0f).all());
  CHECK((flow.v == 0.0f).all());
  CHECK(flow.valid(0, 0));
  CHECK_FALSE(flow.valid(2, 2));
}

TEST_CASE("ego_flow: hand-computed translation case") {
  // fx=fy=1, principal point at the origin, z=2, camera moves (1,0,0):
  // the pixel at the optical axis moves by (0.5, 0).
  DepthMap d = constant_depth(1, 1, 2.0);
  const CameraIntrinsics K{1.0, 1.0, 0.0, 0.0};
  const RigidPose pose(Eigen::Matrix3d::Identity(), {1.0, 0.0, 0.0});
  const FlowField flow = ego_flow(d, K, pose);
  CHECK(flow.valid(0, 0));
  CHECK(flow.u(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(flow.v(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("ego_flow: points behind the camera are invalidated") {
  DepthMap d = constant_depth(3, 3, 1.0);
  const CameraIntrinsics K{100.0, 100.0, 1.0, 1.0};
  const RigidPose pose(Eigen::Matrix3d::Identity(), {0.0, 0.0, -2.0});
  const FlowField flow = ego_flow(d, K, pose);
  CHECK_FALSE(flow.valid.any());
}

TEST_CASE("projection round-trip reproduces pixel coordinates") {
  std::mt19937_64 rng(41);
  const CameraIntrinsics K{240.0, 230.0, 127.5, 130.0};
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector2d px(uniform_real(rng, 0.0, 255.0), uniform_real(rng, 0.0, 255.0));
    const double z = uniform_real(rng, 0.5, 50.0);
    const Eigen::Vector2d back = project(K, back_project(K, px, z));
    CHECK((back - px).norm() < 1e-9);
  }
}

TEST_CASE("estimate_pose: noiseless identity is recovered almost exactly") {
  std::mt19937_64 rng(42);
  const CameraIntrinsics K{200.0, 200.0, 320.0, 240.0};
  const auto corrs = synthesize_correspondences(rng, K, RigidPose::identity(), 50, 0.0, 0.0);
  const PoseEstimate est = estimate_pose(corrs, K, RansacConfig{200, 2.0, 1});
  CHECK(rotation_angle_deg(est.pose.rotation, Eigen::Matrix3d::Identity()) < 1e-6);
  CHECK(est.pose.translation.norm() < 1e-6);
  for (bool inlier : est.inliers) CHECK(inlier);
}

TEST_CASE("estimate_pose: noisy correspondences with gross outliers") {
  std::mt19937_64 rng(43);
  const CameraIntrinsics K{200.0, 200.0, 320.0, 240.0};
  const RigidPose truth = test::random_pose(rng, 10.0 * kDeg, 1.0);
  const auto corrs = synthesize_correspondences(rng, K, truth, 200, 0.5, 0.2);
  const PoseEstimate est = estimate_pose(corrs, K, RansacConfig{1000, 2.0, 7});
  CHECK(rotation_angle_deg(est.pose.rotation, truth.rotation) < 0.5);
  CHECK((est.pose.translation - truth.translation).norm() < 0.02 * truth.translation.norm() + 1e-6);
  for (int i = 0; i < 40; ++i) CHECK_FALSE(est.inliers[static_cast<std::size_t>(i)]);
}

TEST_CASE("estimate_pose: too few correspondences") {
  std::mt19937_64 rng(44);
  const CameraIntrinsics K{200.0, 200.0, 320.0, 240.0};
  const auto corrs = synthesize_correspondences(rng, K, RigidPose::identity(), 5, 0.0, 0.0);
  CHECK_THROWS_AS(estimate_pose(corrs, K, RansacConfig{}), InsufficientData);
}

TEST_CASE("estimate_pose: inconsistent correspondences give no consensus") {
  std::mt19937_64 rng(45);
  const CameraIntrinsics K{200.0, 200.0, 320.0, 240.0};
  std::vector<Correspondence> corrs;
  for (int i = 0; i < 30; ++i) {
    Correspondence c;
    c.p0 = {uniform_real(rng, 0.0, 640.0), uniform_real(rng, 0.0, 480.0)};
    c.p1 = {uniform_real(rng, 0.0, 640.0), uniform_real(rng, 0.0, 480.0)};
    c.z0 = uniform_real(rng, 1.0, 10.0);
    corrs.push_back(c);
  }
  CHECK_THROWS_AS(estimate_pose(corrs, K, RansacConfig{300, 0.05, 3}), NoConsensus);
}

TEST_CASE("estimate_pose is deterministic for a fixed seed") {
  std::mt19937_64 rng(46);
  const CameraIntrinsics K{200.0, 200.0, 320.0, 240.0};
  const RigidPose truth = test::random_pose(rng, 5.0 * kDeg, 0.5);
  const auto corrs = synthesize_correspondences(rng, K, truth, 100, 0.5, 0.1);
  const PoseEstimate a = estimate_pose(corrs, K, RansacConfig{500, 2.0, 11});
  const PoseEstimate b = estimate_pose(corrs, K, RansacConfig{500, 2.0, 11});
  CHECK(a.pose.rotation == b.pose.rotation);
  CHECK(a.pose.translation == b.pose.translation);
  CHECK(a.inliers == b.inliers);
}

TEST_CASE("complete_depth: dense input is returned unchanged") {
  const DepthMap d = constant_depth(5, 5, 2.0);
  const DepthMap out = complete_depth(d, 3);
  CHECK((out.z == d.z).all());
  CHECK(out.valid.all());
}

TEST_CASE("complete_depth: one valid pixel fills a 3x3 map in one pass") {
  DepthMap d = DepthMap::invalid(3, 3);
  d.z(1, 1) = 5.0;
  d.valid(1, 1) = true;
  const DepthMap out = complete_depth(d, 3);
  CHECK(out.valid.all());
  CHECK((out.z == 5.0).all());
}

TEST_CASE("complete_depth: nearer depth wins contested holes") {
  DepthMap d = DepthMap::invalid(3, 1);
  d.z(0, 0) = 2.0;
  d.valid(0, 0) = true;
  d.z(0, 2) = 6.0;
  d.valid(0, 2) = true;
  const DepthMap out = complete_depth(d, 3);
  CHECK(out.z(0, 1) == 2.0);
  CHECK(out.z(0, 0) == 2.0);  // valid input pixels unchanged
  CHECK(out.z(0, 2) == 6.0);
}

TEST_CASE("complete_depth: empty input and bad kernels are rejected") {
  CHECK_THROWS_AS(complete_depth(DepthMap::invalid(4, 4), 3), EmptyInput);
  CHECK_THROWS_AS(complete_depth(constant_depth(4, 4, 1.0), 4), ConfigError);
}

TEST_CASE("fb_consistency: opposite flows are consistent") {
  const FlowField fwd = FlowField::constant(10, 10, 2.0f, 0.0f);
  const FlowField bwd = FlowField::constant(10, 10, -2.0f, 0.0f);
  const PlaneB mask = fb_consistency(fwd, bwd, ConsistencyConfig{3.0});
  CHECK(mask(5, 5));
  CHECK(mask(0, 0));
}

TEST_CASE("fb_consistency: residual above the threshold fails") {
  const FlowField fwd = FlowField::constant(10, 10, 5.0f, 0.0f);
  const FlowField bwd = FlowField::constant(10, 10, -1.0f, 0.0f);
  const PlaneB mask = fb_consistency(fwd, bwd, ConsistencyConfig{3.0});
  CHECK_FALSE(mask(5, 2));  // |(5,0) + (-1,0)| = 4 > 3
}

TEST_CASE("fb_consistency: flow leaving the image is unsampleable") {
  const FlowField fwd = FlowField::constant(6, 6, 10.0f, 0.0f);
  const FlowField bwd = FlowField::constant(6, 6, -10.0f, 0.0f);
  const PlaneB mask = fb_consistency(fwd, bwd, ConsistencyConfig{3.0});
  CHECK_FALSE(mask.any());
}

TEST_CASE("fb_consistency mask shrinks monotonically with the threshold") {
  std::mt19937_64 rng(47);
  const FlowField fwd = test::random_flow(rng, 12, 12, 3.0, 0.9);
  const FlowField bwd = test::random_flow(rng, 12, 12, 3.0, 0.9);
  const PlaneB loose = fb_consistency(fwd, bwd, ConsistencyConfig{4.0});
  const PlaneB tight = fb_consistency(fwd, bwd, ConsistencyConfig{1.0});
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x)
      if (tight(y, x)) CHECK(loose(y, x));
}

TEST_CASE("fb_consistency shape check") {
  CHECK_THROWS_AS(fb_consistency(FlowField::zeros(4, 4, true), FlowField::zeros(5, 4, true),
                                 ConsistencyConfig{}),
                  ShapeError);
}

TEST_CASE("ego_hints: static scene with exact depth and pose") {
  SceneSpec spec;
  spec.width = 96;
  spec.height = 96;
  spec.K = CameraIntrinsics{120.0, 120.0, 47.5, 47.5};
  spec.layout = BackgroundLayout::GroundWall;
  spec.ground_height = 1.5;
  spec.plane_depth = 4.0;
  spec.texture_seed = 77;
  spec.sensor_seed = 78;
  spec.pose = RigidPose(axis_angle_rotation({0.0, 0.2 * kDeg, 0.0}), {0.02, 0.0, 0.0});
  const Scene scene = make_scene(spec, "static");

  // Depth support away from the borders so every hint's target stays inside.
  DepthMap d0 = scene.d0_exact;
  DepthMap d1 = scene.d1_exact;
  for (int y = 0; y < 96; ++y)
    for (int x = 0; x < 96; ++x) {
      const bool interior = x >= 8 && x < 88 && y >= 8 && y < 88;
      const bool on = interior && (y % 4 == 0) && (x % 5 == 0);
      if (!on) {
        d0.valid(y, x) = false;
        d0.z(y, x) = 0.0;
      }
    }

  EgoHintsConfig cfg;
  cfg.pose = scene.pose;
  const EgoHintsResult result = ego_hints_full(d0, d1, scene.K, scene.i0, scene.i1, cfg);

  CHECK(result.filtered.density() == doctest::Approx(
            static_cast<double>(d0.valid.count()) / (96.0 * 96.0)));
  const HintStats stats = hint_stats(result.filtered, scene.gt);
  CHECK(stats.epe < 1e-3);
}

TEST_CASE("ego_hints: featureless images propagate InsufficientData") {
  const ImageGray flat = ImageGray::constant(64, 64, 0.5f);
  const DepthMap d = constant_depth(64, 64, 3.0);
  const CameraIntrinsics K{100.0, 100.0, 31.5, 31.5};
  CHECK_THROWS_AS(ego_hints(d, d, K, flat, flat, EgoHintsConfig{}), InsufficientData);
}

TEST_CASE("ego_hints: identity motion gives zero hints") {
  SceneSpec spec;
  spec.width = 64;
  spec.height = 64;
  spec.K = CameraIntrinsics{100.0, 100.0, 31.5, 31.5};
  spec.texture_seed = 5;
  spec.sensor_seed = 6;
  const Scene scene = make_scene(spec, "identity");
  EgoHintsConfig cfg;
  cfg.pose = RigidPose::identity();
  const SparseHints hints =
      ego_hints(scene.d0_exact, scene.d1_exact, scene.K, scene.i0, scene.i1, cfg);
  CHECK(hints.density() > 0.9);
  CHECK((hints.hx == 0.0f).all());
  CHECK((hints.hy == 0.0f).all());
}

TEST_CASE("ego_hints: forward-backward gating strips moving objects") {
  SceneSpec spec;
  spec.width = 128;
  spec.height = 128;
  spec.K = CameraIntrinsics{160.0, 160.0, 63.5, 63.5};
  spec.layout = BackgroundLayout::GroundWall;
  spec.ground_height = 1.5;
  spec.plane_depth = 3.2;
  spec.texture_seed = 91;
  spec.sensor_seed = 92;
  spec.pose = RigidPose(axis_angle_rotation({0.0, 0.3 * kDeg, 0.0}), {0.45, 0.0, 0.0});
  ObjectSpec obj;
  obj.x = 30;
  obj.y = 60;
  obj.w = 30;
  obj.h = 30;
  obj.depth = 1.2;
  obj.mx = 4.0;
  obj.my = 2.0;
  obj.texture_seed = 93;
  spec.objects = {obj};
  const Scene scene = make_scene(spec, "dynamic");

  EgoHintsConfig cfg;
  cfg.pose = scene.pose;
  const EgoHintsResult result =
      ego_hints_full(scene.d0, scene.d1, scene.K, scene.i0, scene.i1, cfg);

  int object_unfiltered = 0, object_filtered = 0;
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x)
      if (scene.seg.id(y, x) != 0) {
        object_unfiltered += result.unfiltered.v(y, x) ? 1 : 0;
        object_filtered += result.filtered.v(y, x) ? 1 : 0;
      }
  CHECK(object_unfiltered > 0);
  CHECK(object_filtered < object_unfiltered);
}
