#include "guidedflow/egoflow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "guidedflow/random.hpp"

namespace guidedflow {

Eigen::Vector3d back_project(const CameraIntrinsics& K, const Eigen::Vector2d& px, double z) {
  return {z * (px.x() - K.cx) / K.fx, z * (px.y() - K.cy) / K.fy, z};
}

Eigen::Vector2d project(const CameraIntrinsics& K, const Eigen::Vector3d& point) {
  return {K.fx * point.x() / point.z() + K.cx, K.fy * point.y() / point.z() + K.cy};
}

DenseFlowD ego_flow_exact(const DepthMap& depth, const CameraIntrinsics& K,
                          const RigidPose& pose) {
  K.validate();
  const int w = depth.width();
  const int h = depth.height();
  DenseFlowD flow{PlaneD::Zero(h, w), PlaneD::Zero(h, w), PlaneB::Constant(h, w, false)};

  const bool is_identity = pose.rotation == Eigen::Matrix3d::Identity() &&
                           pose.translation == Eigen::Vector3d::Zero();
  if (is_identity) {
    flow.valid = depth.valid;
    return flow;
  }

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!depth.valid(y, x)) continue;
      const Eigen::Vector3d p0 = back_project(K, {static_cast<double>(x), static_cast<double>(y)},
                                              depth.z(y, x));
      const Eigen::Vector3d p1 = pose.rotation * p0 + pose.translation;
      if (!(p1.z() > 0.0)) continue;  // behind the camera, leave invalid
      const Eigen::Vector2d projected = project(K, p1);
      flow.u(y, x) = projected.x() - x;
      flow.v(y, x) = projected.y() - y;
      flow.valid(y, x) = true;
    }
  }
  return flow;
}

FlowField ego_flow(const DepthMap& depth, const CameraIntrinsics& K, const RigidPose& pose) {
  const DenseFlowD exact = ego_flow_exact(depth, K, pose);
  FlowField out = FlowField::zeros(depth.width(), depth.height(), false);
  out.valid = exact.valid;
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      if (exact.valid(y, x)) {
        out.u(y, x) = static_cast<float>(exact.u(y, x));
        out.v(y, x) = static_cast<float>(exact.v(y, x));
      }
  return out;
}

// ---------------------------------------------------------------------------
// PnP

namespace {

struct Observation {
  Eigen::Vector3d point;  // 3D in frame-0 camera coordinates
  Eigen::Vector2d pixel;  // observed in frame 1
};

std::vector<Observation> to_observations(const std::vector<Correspondence>& corrs,
                                         const CameraIntrinsics& K) {
  std::vector<Observation> obs;
  obs.reserve(corrs.size());
  for (const auto& c : corrs) obs.push_back({back_project(K, c.p0, c.z0), c.p1});
  return obs;
}

struct PosePair {
  Eigen::Matrix3d r;
  Eigen::Vector3d t;
};

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

// Linear 11-dof resection on normalized image coordinates. Returns nothing
// for degenerate (near-coplanar / collinear) subsets.
std::optional<PosePair> dlt_pose(const std::vector<Observation>& obs,
                                 const std::vector<int>& subset, const CameraIntrinsics& K) {
  const int n = static_cast<int>(subset.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, 12);
  for (int i = 0; i < n; ++i) {
    const Observation& o = obs[static_cast<std::size_t>(subset[static_cast<std::size_t>(i)])];
    const double u = (o.pixel.x() - K.cx) / K.fx;
    const double v = (o.pixel.y() - K.cy) / K.fy;
    const Eigen::Vector4d xh(o.point.x(), o.point.y(), o.point.z(), 1.0);
    a.block<1, 4>(2 * i, 0) = xh.transpose();
    a.block<1, 4>(2 * i, 8) = -u * xh.transpose();
    a.block<1, 4>(2 * i + 1, 4) = xh.transpose();
    a.block<1, 4>(2 * i + 1, 8) = -v * xh.transpose();
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd p = svd.matrixV().col(11);

  Eigen::Matrix3d b;
  Eigen::Vector3d tb;
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col < 3; ++col) b(row, col) = p(4 * row + col);
    tb(row) = p(4 * row + 3);
  }
  if (b.determinant() < 0.0) {
    b = -b;
    tb = -tb;
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> bsvd(b, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sigma = bsvd.singularValues();
  if (!(sigma(0) > 0.0) || sigma(2) / sigma(0) < 1e-6) return std::nullopt;

  Eigen::Matrix3d r = bsvd.matrixU() * bsvd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
    flip(2, 2) = -1.0;
    r = bsvd.matrixU() * flip * bsvd.matrixV().transpose();
  }
  const double scale = sigma.mean();
  return PosePair{r, tb / scale};
}

// Gauss-Newton on pixel reprojection residuals with a left-multiplied
// rotation increment. Small constant damping guards rank-deficient normal
// equations on degenerate subsets.
PosePair refine_pose(PosePair pose, const std::vector<Observation>& obs,
                     const std::vector<int>& subset, const CameraIntrinsics& K, int iterations) {
  for (int iter = 0; iter < iterations; ++iter) {
    Eigen::Matrix<double, 6, 6> hess = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> grad = Eigen::Matrix<double, 6, 1>::Zero();
    for (int idx : subset) {
      const Observation& o = obs[static_cast<std::size_t>(idx)];
      const Eigen::Vector3d pc = pose.r * o.point + pose.t;
      if (pc.z() < 1e-9) continue;
      const double iz = 1.0 / pc.z();
      const Eigen::Vector2d res(K.fx * pc.x() * iz + K.cx - o.pixel.x(),
                                K.fy * pc.y() * iz + K.cy - o.pixel.y());
      Eigen::Matrix<double, 2, 3> dpix;
      dpix << K.fx * iz, 0.0, -K.fx * pc.x() * iz * iz,
              0.0, K.fy * iz, -K.fy * pc.y() * iz * iz;
      Eigen::Matrix<double, 3, 6> dpose;
      dpose.leftCols<3>() = -skew(pose.r * o.point);
      dpose.rightCols<3>() = Eigen::Matrix3d::Identity();
      const Eigen::Matrix<double, 2, 6> jac = dpix * dpose;
      hess += jac.transpose() * jac;
      grad += jac.transpose() * res;
    }
    hess.diagonal().array() += 1e-9;
    const Eigen::Matrix<double, 6, 1> delta = hess.ldlt().solve(-grad);
    if (!delta.allFinite()) break;
    pose.r = axis_angle_rotation(delta.head<3>()) * pose.r;
    pose.t += delta.tail<3>();
    if (delta.norm() < 1e-12) break;
  }
  return pose;
}

double reprojection_error(const PosePair& pose, const Observation& o,
                          const CameraIntrinsics& K) {
  const Eigen::Vector3d pc = pose.r * o.point + pose.t;
  if (pc.z() < 1e-9) return std::numeric_limits<double>::infinity();
  const Eigen::Vector2d proj(K.fx * pc.x() / pc.z() + K.cx, K.fy * pc.y() / pc.z() + K.cy);
  return (proj - o.pixel).norm();
}

}  // namespace

PoseEstimate estimate_pose(const std::vector<Correspondence>& corrs, const CameraIntrinsics& K,
                           const RansacConfig& cfg) {
  K.validate();
  constexpr int kMinimal = 6;
  const int n = static_cast<int>(corrs.size());
  if (n < kMinimal) throw InsufficientData("estimate_pose: need at least 6 correspondences");
  if (cfg.iters < 1 || !(cfg.inlier_px > 0.0))
    throw ConfigError("estimate_pose: bad RANSAC configuration");

  const std::vector<Observation> obs = to_observations(corrs, K);
  std::mt19937_64 rng(cfg.seed);

  std::vector<int> indices(static_cast<std::size_t>(n));
  std::vector<int> subset(kMinimal);
  std::optional<PosePair> best;
  int best_count = -1;

  for (int iter = 0; iter < cfg.iters; ++iter) {
    for (int i = 0; i < n; ++i) indices[static_cast<std::size_t>(i)] = i;
    for (int i = 0; i < kMinimal; ++i) {
      const auto j = i + static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(n - i)));
      std::swap(indices[static_cast<std::size_t>(i)], indices[static_cast<std::size_t>(j)]);
      subset[static_cast<std::size_t>(i)] = indices[static_cast<std::size_t>(i)];
    }

    auto initial = dlt_pose(obs, subset, K);
    if (!initial) continue;
    const PosePair candidate = refine_pose(*initial, obs, subset, K, 10);

    int count = 0;
    for (int i = 0; i < n; ++i)
      if (reprojection_error(candidate, obs[static_cast<std::size_t>(i)], K) < cfg.inlier_px)
        ++count;
    if (count > best_count) {
      best_count = count;
      best = candidate;
    }
  }

  if (!best || best_count < kMinimal)
    throw NoConsensus("estimate_pose: no model reached 6 inliers");

  std::vector<int> inlier_idx;
  for (int i = 0; i < n; ++i)
    if (reprojection_error(*best, obs[static_cast<std::size_t>(i)], K) < cfg.inlier_px)
      inlier_idx.push_back(i);
  const PosePair refined = refine_pose(*best, obs, inlier_idx, K, 25);

  PoseEstimate result;
  // Re-orthonormalize accumulated increments before constructing the pose.
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(refined.r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
    flip(2, 2) = -1.0;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  result.pose = RigidPose(r, refined.t);
  result.inliers.resize(static_cast<std::size_t>(n));
  const PosePair final_pair{result.pose.rotation, result.pose.translation};
  for (int i = 0; i < n; ++i)
    result.inliers[static_cast<std::size_t>(i)] =
        reprojection_error(final_pair, obs[static_cast<std::size_t>(i)], K) < cfg.inlier_px;
  return result;
}

// ---------------------------------------------------------------------------
// Depth completion

DepthMap complete_depth(const DepthMap& depth, int kernel) {
  if (kernel < 3 || kernel % 2 == 0) throw ConfigError("complete_depth: kernel must be odd >= 3");
  const int w = depth.width();
  const int h = depth.height();
  if (depth.valid.count() == 0) throw EmptyInput("complete_depth: no valid pixels");

  DepthMap cur = depth;
  const int half = kernel / 2;
  for (int pass = 0; pass < 10; ++pass) {
    if (cur.valid.count() == static_cast<Eigen::Index>(w) * h) break;
    DepthMap next = cur;
    bool changed = false;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (cur.valid(y, x)) continue;
        double best = std::numeric_limits<double>::infinity();
        for (int dy = -half; dy <= half; ++dy) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          for (int dx = -half; dx <= half; ++dx) {
            const int sx = x + dx;
            if (sx < 0 || sx >= w) continue;
            if (cur.valid(sy, sx)) best = std::min(best, cur.z(sy, sx));
          }
        }
        if (std::isfinite(best)) {
          next.z(y, x) = best;
          next.valid(y, x) = true;
          changed = true;
        }
      }
    }
    cur = std::move(next);
    if (!changed) break;
  }
  return cur;
}

// ---------------------------------------------------------------------------
// Forward-backward consistency

namespace {

// Bilinear flow lookup; taps with nonzero weight must be valid and inside.
bool sample_flow(const FlowField& flow, double x, double y, double& out_u, double& out_v) {
  const int w = flow.width();
  const int h = flow.height();
  if (x < 0.0 || y < 0.0 || x > w - 1.0 || y > h - 1.0) return false;
  const int x0 = std::min(static_cast<int>(std::floor(x)), w - 1);
  const int y0 = std::min(static_cast<int>(std::floor(y)), h - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);

  const double w00 = (1.0 - fx) * (1.0 - fy);
  const double w01 = fx * (1.0 - fy);
  const double w10 = (1.0 - fx) * fy;
  const double w11 = fx * fy;
  const struct {
    int x, y;
    double w;
  } taps[4] = {{x0, y0, w00}, {x1, y0, w01}, {x0, y1, w10}, {x1, y1, w11}};

  double u = 0.0, v = 0.0;
  for (const auto& tap : taps) {
    if (tap.w == 0.0) continue;
    if (!flow.valid(tap.y, tap.x)) return false;
    u += tap.w * flow.u(tap.y, tap.x);
    v += tap.w * flow.v(tap.y, tap.x);
  }
  out_u = u;
  out_v = v;
  return true;
}

}  // namespace

PlaneB fb_consistency(const FlowField& fwd, const FlowField& bwd, const ConsistencyConfig& cfg) {
  cfg.validate();
  if (fwd.width() != bwd.width() || fwd.height() != bwd.height())
    throw ShapeError("fb_consistency: flow fields differ in shape");

  const int w = fwd.width();
  const int h = fwd.height();
  PlaneB mask = PlaneB::Constant(h, w, false);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!fwd.valid(y, x)) continue;
      const double fu = fwd.u(y, x);
      const double fv = fwd.v(y, x);
      double bu = 0.0, bv = 0.0;
      if (!sample_flow(bwd, x + fu, y + fv, bu, bv)) continue;
      const double du = fu + bu;
      const double dv = fv + bv;
      if (std::sqrt(du * du + dv * dv) <= cfg.threshold) mask(y, x) = true;
    }
  }
  return mask;
}

// ---------------------------------------------------------------------------
// Corner matching

namespace {

struct Corner {
  int x = 0;
  int y = 0;
  double response = 0.0;
};

PlaneD harris_response(const ImageGray& img, int window) {
  const int w = img.width();
  const int h = img.height();
  PlaneD ix = PlaneD::Zero(h, w), iy = PlaneD::Zero(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
      const int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
      ix(y, x) = 0.5 * (img.intensity(y, xp) - img.intensity(y, xm));
      iy(y, x) = 0.5 * (img.intensity(yp, x) - img.intensity(ym, x));
    }

  const int half = window / 2;
  PlaneD response = PlaneD::Zero(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double sxx = 0.0, syy = 0.0, sxy = 0.0;
      for (int dy = -half; dy <= half; ++dy) {
        const int sy = std::clamp(y + dy, 0, h - 1);
        for (int dx = -half; dx <= half; ++dx) {
          const int sx = std::clamp(x + dx, 0, w - 1);
          sxx += ix(sy, sx) * ix(sy, sx);
          syy += iy(sy, sx) * iy(sy, sx);
          sxy += ix(sy, sx) * iy(sy, sx);
        }
      }
      const double trace = sxx + syy;
      response(y, x) = sxx * syy - sxy * sxy - 0.06 * trace * trace;
    }
  }
  return response;
}

// Patch descriptor centred at (x, y); zero-mean unit-norm, or empty norm
// flag for constant patches.
bool normalized_patch(const ImageGray& img, int x, int y, int patch, Eigen::VectorXd& out) {
  const int half = patch / 2;
  int c = 0;
  for (int dy = -half; dy <= half; ++dy)
    for (int dx = -half; dx <= half; ++dx) out(c++) = img.intensity(y + dy, x + dx);
  out.array() -= out.mean();
  const double norm = out.norm();
  if (norm < 1e-9) return false;
  out /= norm;
  return true;
}

}  // namespace

std::vector<Correspondence> match_features(const ImageGray& i0, const ImageGray& i1,
                                           const DepthMap& d0, const MatcherConfig& cfg) {
  if (i0.width() != i1.width() || i0.height() != i1.height() || d0.width() != i0.width() ||
      d0.height() != i0.height())
    throw ShapeError("match_features: input resolutions differ");
  if (cfg.patch < 3 || cfg.patch % 2 == 0 || cfg.corner_window < 3 || cfg.search_radius < 1)
    throw ConfigError("match_features: bad matcher configuration");

  const int w = i0.width();
  const int h = i0.height();
  const int margin = cfg.patch / 2;

  const PlaneD response = harris_response(i0, cfg.corner_window);
  double max_response = 0.0;
  for (int y = margin; y < h - margin; ++y)
    for (int x = margin; x < w - margin; ++x)
      if (d0.valid(y, x)) max_response = std::max(max_response, response(y, x));
  if (max_response <= 0.0) return {};
  const double threshold = 1e-4 * max_response;

  // Non-max suppression over depth-supported pixels; equal responses keep
  // the row-major first candidate.
  std::vector<Corner> corners;
  const int nms = cfg.corner_window / 2;
  for (int y = margin; y < h - margin; ++y) {
    for (int x = margin; x < w - margin; ++x) {
      if (!d0.valid(y, x) || response(y, x) < threshold) continue;
      bool is_max = true;
      for (int dy = -nms; dy <= nms && is_max; ++dy) {
        for (int dx = -nms; dx <= nms; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int sy = y + dy, sx = x + dx;
          if (sy < 0 || sy >= h || sx < 0 || sx >= w || !d0.valid(sy, sx)) continue;
          const double other = response(sy, sx);
          if (other > response(y, x) ||
              (other == response(y, x) && (sy < y || (sy == y && sx < x)))) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) corners.push_back({x, y, response(y, x)});
    }
  }
  std::stable_sort(corners.begin(), corners.end(), [](const Corner& a, const Corner& b) {
    if (a.response != b.response) return a.response > b.response;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  if (static_cast<int>(corners.size()) > cfg.max_corners)
    corners.resize(static_cast<std::size_t>(cfg.max_corners));

  // Exhaustive ZNCC search in the second frame; a ratio test against the
  // best score outside the winning peak rejects ambiguous matches.
  std::vector<Correspondence> matches;
  Eigen::VectorXd ref(cfg.patch * cfg.patch);
  Eigen::VectorXd cand(cfg.patch * cfg.patch);
  for (const Corner& corner : corners) {
    if (!normalized_patch(i0, corner.x, corner.y, cfg.patch, ref)) continue;

    const int x_lo = std::max(corner.x - cfg.search_radius, margin);
    const int x_hi = std::min(corner.x + cfg.search_radius, w - 1 - margin);
    const int y_lo = std::max(corner.y - cfg.search_radius, margin);
    const int y_hi = std::min(corner.y + cfg.search_radius, h - 1 - margin);

    double best = -2.0;
    int best_x = -1, best_y = -1;
    for (int qy = y_lo; qy <= y_hi; ++qy)
      for (int qx = x_lo; qx <= x_hi; ++qx) {
        if (!normalized_patch(i1, qx, qy, cfg.patch, cand)) continue;
        const double score = ref.dot(cand);
        if (score > best) {
          best = score;
          best_x = qx;
          best_y = qy;
        }
      }
    if (best_x < 0 || best < cfg.min_zncc) continue;

    double second = -2.0;
    for (int qy = y_lo; qy <= y_hi; ++qy)
      for (int qx = x_lo; qx <= x_hi; ++qx) {
        if (std::abs(qx - best_x) <= 2 && std::abs(qy - best_y) <= 2) continue;
        if (!normalized_patch(i1, qx, qy, cfg.patch, cand)) continue;
        second = std::max(second, ref.dot(cand));
      }
    if (second > -2.0 && (1.0 - best) > cfg.max_cost_ratio * (1.0 - second)) continue;

    // Per-axis subpixel refinement on the ZNCC surface.
    double off_x = 0.0, off_y = 0.0;
    auto zncc_at = [&](int qx, int qy) {
      if (qx < margin || qx > w - 1 - margin || qy < margin || qy > h - 1 - margin) return -1.0;
      if (!normalized_patch(i1, qx, qy, cfg.patch, cand)) return -1.0;
      return ref.dot(cand);
    };
    if (best_x > x_lo && best_x < x_hi) {
      const double sm = zncc_at(best_x - 1, best_y);
      const double sp = zncc_at(best_x + 1, best_y);
      const double denom = sm - 2.0 * best + sp;
      if (denom < 0.0) off_x = std::clamp(0.5 * (sm - sp) / denom, -0.5, 0.5);
    }
    if (best_y > y_lo && best_y < y_hi) {
      const double sm = zncc_at(best_x, best_y - 1);
      const double sp = zncc_at(best_x, best_y + 1);
      const double denom = sm - 2.0 * best + sp;
      if (denom < 0.0) off_y = std::clamp(0.5 * (sm - sp) / denom, -0.5, 0.5);
    }

    Correspondence c;
    c.p0 = {static_cast<double>(corner.x), static_cast<double>(corner.y)};
    c.p1 = {best_x + off_x, best_y + off_y};
    c.z0 = d0.z(corner.y, corner.x);
    matches.push_back(c);
  }
  return matches;
}

// ---------------------------------------------------------------------------
// Hint pipeline

EgoHintsResult ego_hints_full(const DepthMap& d0, const DepthMap& d1, const CameraIntrinsics& K,
                              const ImageGray& i0, const ImageGray& i1,
                              const EgoHintsConfig& cfg) {
  if (d0.width() != d1.width() || d0.height() != d1.height() || i0.width() != d0.width() ||
      i0.height() != d0.height() || i1.width() != d0.width() || i1.height() != d0.height())
    throw ShapeError("ego_hints: input resolutions differ");

  EgoHintsResult result;
  if (cfg.pose) {
    result.pose = *cfg.pose;
  } else {
    const auto corrs = match_features(i0, i1, d0, cfg.matcher);
    result.pose = estimate_pose(corrs, K, cfg.ransac).pose;
  }

  const FlowField fwd = ego_flow(d0, K, result.pose);
  const DepthMap d1_dense = complete_depth(d1, cfg.completion_kernel);
  const FlowField bwd = ego_flow(d1_dense, K, result.pose.inverse());
  result.fb_mask = fb_consistency(fwd, bwd, cfg.consistency);

  result.unfiltered.hx = fwd.u;
  result.unfiltered.hy = fwd.v;
  result.unfiltered.v = fwd.valid;

  result.filtered = result.unfiltered;
  result.filtered.v = result.unfiltered.v && result.fb_mask;
  result.filtered = canonicalize(result.filtered);
  return result;
}

SparseHints ego_hints(const DepthMap& d0, const DepthMap& d1, const CameraIntrinsics& K,
                      const ImageGray& i0, const ImageGray& i1, const EgoHintsConfig& cfg) {
  const EgoHintsResult full = ego_hints_full(d0, d1, K, i0, i1, cfg);
  return cfg.filter ? full.filtered : full.unfiltered;
}

}  // namespace guidedflow
