#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "guidedflow/types.hpp"

namespace guidedflow {

/// Textured rectangle moving with its own 2D motion, overriding the
/// background flow, depth and segmentation under its footprint.
struct ObjectSpec {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  double depth = 1.5;  // meters
  double mx = 0.0;     // independent 2D motion (px)
  double my = 0.0;
  std::uint64_t texture_seed = 0;
};

enum class BackgroundLayout { FrontoPlane, GroundWall };
enum class DepthSampling { Scanlines, Uniform };

struct SceneSpec {
  int width = 256;
  int height = 256;
  CameraIntrinsics K{200.0, 200.0, 127.5, 127.5};
  RigidPose pose;  // frame 0 -> frame 1
  BackgroundLayout layout = BackgroundLayout::GroundWall;
  double plane_depth = 4.0;    // wall (or the single fronto plane)
  double ground_height = 1.5;  // camera height above ground (GroundWall)
  std::vector<ObjectSpec> objects;
  std::uint64_t texture_seed = 1;
  double depth_sparsity = 0.05;
  DepthSampling depth_sampling = DepthSampling::Scanlines;
  double depth_noise = 0.01;  // multiplicative amplitude
  std::uint64_t sensor_seed = 1;
};

/// A generated scene with exact analytic ground truth. The sparse noisy
/// depth maps (d0, d1) model the sensor and are what gets written to disk;
/// the exact dense ones are kept for geometry checks.
struct Scene {
  std::string name;
  ImageGray i0;
  ImageGray i1;
  FlowField gt;         // float32 ground truth
  PlaneD gt_u;          // double-precision analytic flow
  PlaneD gt_v;
  PlaneB occluded;      // background no longer visible in frame 1
  DepthMap d0;
  DepthMap d1;
  DepthMap d0_exact;
  DepthMap d1_exact;
  SegmentationMask seg;
  CameraIntrinsics K;
  RigidPose pose;
};

/// Band-limited value noise in [0, 1], evaluable at any real coordinate.
double value_noise(double x, double y, std::uint64_t seed);

/// Deterministic: byte-identical outputs for identical spec.
Scene make_scene(const SceneSpec& spec, const std::string& name);

/// Scene parameters for the named preset ("static-suite" or
/// "dynamic-suite"); per-scene values are drawn from the seed.
std::vector<SceneSpec> preset_scenes(const std::string& preset, int count, std::uint64_t seed);

// On-disk layout shared with the benchmark runner: per scene a directory
// holding image0/image1 (16-bit gray PNG), flow_gt.flo + flow_gt.png,
// depth0/depth1 PNGs, mask.png, occlusion.png and intrinsics/pose text
// files, all listed in manifest.txt at the dataset root.

void write_scene(const std::filesystem::path& dir, const Scene& scene);

struct LoadedScene {
  ImageGray i0;
  ImageGray i1;
  FlowField gt;
  std::optional<DepthMap> d0;
  std::optional<DepthMap> d1;
  std::optional<SegmentationMask> seg;
  std::optional<CameraIntrinsics> K;
  std::optional<RigidPose> pose;
};

LoadedScene load_scene(const std::filesystem::path& dir);

void write_manifest(const std::filesystem::path& dataset, const std::vector<std::string>& names);
std::vector<std::string> read_manifest(const std::filesystem::path& dataset);

}  // namespace guidedflow
