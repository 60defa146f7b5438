#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

#include "guidedflow/types.hpp"

namespace guidedflow {

/// Double-precision flow planes, used where results feed further geometry
/// before being rounded into a FlowField.
struct DenseFlowD {
  PlaneD u;
  PlaneD v;
  PlaneB valid;
};

Eigen::Vector3d back_project(const CameraIntrinsics& K, const Eigen::Vector2d& px, double z);
Eigen::Vector2d project(const CameraIntrinsics& K, const Eigen::Vector3d& point);

/// Camera-motion flow: back-project each valid depth pixel, transform by the
/// relative pose and re-project; flow = p1 - p0. Pixels with invalid depth
/// or with transformed z <= 0 come out invalid. The identity pose maps to
/// exactly zero flow.
DenseFlowD ego_flow_exact(const DepthMap& depth, const CameraIntrinsics& K, const RigidPose& pose);
FlowField ego_flow(const DepthMap& depth, const CameraIntrinsics& K, const RigidPose& pose);

/// A 2D match between frames plus the metric depth under the first pixel.
struct Correspondence {
  Eigen::Vector2d p0 = Eigen::Vector2d::Zero();
  Eigen::Vector2d p1 = Eigen::Vector2d::Zero();
  double z0 = 0.0;
};

struct RansacConfig {
  int iters = 1000;
  double inlier_px = 2.0;
  std::uint64_t seed = 0;
};

struct PoseEstimate {
  RigidPose pose;
  std::vector<bool> inliers;
};

/// Pose from 2D-3D correspondences: RANSAC over minimal 6-point subsets,
/// each solved by Gauss-Newton on reprojection residuals from a linear DLT
/// initialization, then a final refit on all inliers of the best model.
/// Throws InsufficientData below 6 correspondences and NoConsensus when no
/// model gathers 6 inliers. Deterministic given the seed.
PoseEstimate estimate_pose(const std::vector<Correspondence>& corrs, const CameraIntrinsics& K,
                           const RansacConfig& cfg);

/// Fills invalid pixels by iterated nearest-valid dilation with a square
/// kernel; the smallest depth in the window wins (foreground preferred).
/// Stops when dense or after 10 passes; valid input pixels are unchanged.
DepthMap complete_depth(const DepthMap& depth, int kernel);

/// Forward-backward consistency: samples the backward field bilinearly at
/// p + fwd(p) (taps with nonzero weight must be valid and inside the image)
/// and accepts p when |fwd(p) + sampled_bwd| <= threshold. Invalid forward
/// pixels and unsampleable lookups yield 0.
PlaneB fb_consistency(const FlowField& fwd, const FlowField& bwd, const ConsistencyConfig& cfg);

struct MatcherConfig {
  int max_corners = 500;
  int corner_window = 5;     // Harris accumulation / non-max window
  int patch = 11;            // match patch side (odd)
  int search_radius = 64;    // exhaustive search range in the second frame
  double min_zncc = 0.6;
  double max_cost_ratio = 0.85;  // (1 - best) <= ratio * (1 - second best)
};

/// Corner features on depth-supported pixels of i0, matched into i1 by ZNCC
/// with a ratio test and per-axis subpixel refinement.
std::vector<Correspondence> match_features(const ImageGray& i0, const ImageGray& i1,
                                           const DepthMap& d0, const MatcherConfig& cfg);

struct EgoHintsConfig {
  RansacConfig ransac;
  MatcherConfig matcher;
  ConsistencyConfig consistency;
  int completion_kernel = 3;
  bool filter = true;                 // gate hints by forward-backward consistency
  std::optional<RigidPose> pose;      // known relative pose; skips PnP when set
};

struct EgoHintsResult {
  SparseHints unfiltered;
  SparseHints filtered;
  RigidPose pose;
  PlaneB fb_mask;
};

/// Full hint pipeline: pose (PnP unless provided), forward flow from the
/// sparse depth, backward flow from the inverse pose and the completed
/// second depth map, then forward-backward gating. Hints live only at
/// originally valid pixels of d0.
EgoHintsResult ego_hints_full(const DepthMap& d0, const DepthMap& d1, const CameraIntrinsics& K,
                              const ImageGray& i0, const ImageGray& i1, const EgoHintsConfig& cfg);

SparseHints ego_hints(const DepthMap& d0, const DepthMap& d1, const CameraIntrinsics& K,
                      const ImageGray& i0, const ImageGray& i1, const EgoHintsConfig& cfg);

}  // namespace guidedflow
