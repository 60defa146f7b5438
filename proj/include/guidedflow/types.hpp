#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>

#include "guidedflow/errors.hpp"

namespace guidedflow {

// Dense perfect-pixel storage. Planes are row-major and indexed (y, x):
// x grows right, y grows down, origin at the center of the top-left pixel.
// Projections and warps follow this convention throughout.
template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using PlaneF = Plane<float>;
using PlaneD = Plane<double>;
using PlaneB = Plane<bool>;
using PlaneI = Plane<int>;
using PlaneU16 = Plane<std::uint16_t>;

// One row per pixel (index y * width + x).
using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense 2D displacement map. Flow values are stored in 32-bit floats
/// (the precision of the interchange formats); geometry that produces
/// them is computed in 64-bit and rounded on store. Invalid pixels carry
/// u = v = 0 in canonical form.
struct FlowField {
  PlaneF u;
  PlaneF v;
  PlaneB valid;

  int width() const { return static_cast<int>(u.cols()); }
  int height() const { return static_cast<int>(u.rows()); }

  static FlowField zeros(int width, int height, bool all_valid = true) {
    FlowField f;
    f.u = PlaneF::Zero(height, width);
    f.v = PlaneF::Zero(height, width);
    f.valid = PlaneB::Constant(height, width, all_valid);
    return f;
  }

  static FlowField constant(int width, int height, float fu, float fv) {
    FlowField f;
    f.u = PlaneF::Constant(height, width, fu);
    f.v = PlaneF::Constant(height, width, fv);
    f.valid = PlaneB::Constant(height, width, true);
    return f;
  }
};

/// Zeroes flow at invalid pixels; valid pixels untouched. Idempotent.
FlowField canonicalize(const FlowField& field);

/// Sparse flow guide: hinted displacement (hx, hy) plus a binary validity
/// mask. Canonical form zeroes hints where the mask is off.
struct SparseHints {
  PlaneF hx;
  PlaneF hy;
  PlaneB v;

  int width() const { return static_cast<int>(hx.cols()); }
  int height() const { return static_cast<int>(hx.rows()); }

  /// Fraction of pixels carrying a valid hint, in [0, 1].
  double density() const {
    const auto total = hx.size();
    if (total == 0) return 0.0;
    return static_cast<double>(v.count()) / static_cast<double>(total);
  }

  static SparseHints none(int width, int height) {
    SparseHints h;
    h.hx = PlaneF::Zero(height, width);
    h.hy = PlaneF::Zero(height, width);
    h.v = PlaneB::Constant(height, width, false);
    return h;
  }
};

SparseHints canonicalize(const SparseHints& hints);

/// Per-pixel grid of matching scores over a square search window of
/// radius `radius`. Scores are nonnegative (so Gaussian dampening is
/// monotone). Row p = y*width + x of `scores` holds the window of pixel p,
/// cell (dx, dy) at column (dy+radius)*(2*radius+1) + (dx+radius).
///
/// `base_u`/`base_v` record the integer displacement the window is
/// centred on (zero when built around zero flow); the absolute
/// displacement of a cell is (base_u + dx, base_v + dy).
struct CorrelationVolume {
  int width = 0;
  int height = 0;
  int radius = 0;
  RowMatrixXd scores;
  PlaneI base_u;
  PlaneI base_v;

  int window() const { return 2 * radius + 1; }
  int cells() const { return window() * window(); }
  int cell_index(int dx, int dy) const {
    return (dy + radius) * window() + (dx + radius);
  }

  static CorrelationVolume zeros(int width, int height, int radius) {
    if (width < 1 || height < 1 || radius < 1)
      throw ConfigError("correlation volume needs width, height >= 1 and radius >= 1");
    CorrelationVolume vol;
    vol.width = width;
    vol.height = height;
    vol.radius = radius;
    vol.scores = RowMatrixXd::Zero(static_cast<Eigen::Index>(width) * height, vol.cells());
    vol.base_u = PlaneI::Zero(height, width);
    vol.base_v = PlaneI::Zero(height, width);
    return vol;
  }
};

/// Metric depth per pixel; z > 0 where valid, z = 0 where invalid.
struct DepthMap {
  PlaneD z;
  PlaneB valid;

  int width() const { return static_cast<int>(z.cols()); }
  int height() const { return static_cast<int>(z.rows()); }

  static DepthMap invalid(int width, int height) {
    DepthMap d;
    d.z = PlaneD::Zero(height, width);
    d.valid = PlaneB::Constant(height, width, false);
    return d;
  }
};

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw ConfigError("focal lengths must be positive");
  }
};

/// Rigid transform P1 = R * P0 + t. The rotation must be orthonormal
/// with det +1 within 1e-9; construction enforces it.
struct RigidPose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  RigidPose() = default;
  RigidPose(const Eigen::Matrix3d& r, const Eigen::Vector3d& t) : rotation(r), translation(t) {
    const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity())
                             .cwiseAbs()
                             .maxCoeff();
    if (ortho > 1e-9 || std::abs(rotation.determinant() - 1.0) > 1e-9)
      throw ConfigError("rotation is not orthonormal with det +1");
  }

  static RigidPose identity() { return RigidPose(); }

  RigidPose inverse() const {
    RigidPose inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(rotation.transpose() * translation);
    return inv;
  }

  /// Composition: (a * b) applies b first, then a.
  friend RigidPose operator*(const RigidPose& a, const RigidPose& b) {
    RigidPose out;
    out.rotation = a.rotation * b.rotation;
    out.translation = a.rotation * b.translation + a.translation;
    return out;
  }
};

/// Rodrigues formula; `axis_angle` has the rotation angle as its norm.
Eigen::Matrix3d axis_angle_rotation(const Eigen::Vector3d& axis_angle);

/// Per-pixel instance IDs; 0 is background.
struct SegmentationMask {
  PlaneU16 id;

  int width() const { return static_cast<int>(id.cols()); }
  int height() const { return static_cast<int>(id.rows()); }

  static SegmentationMask background(int width, int height) {
    SegmentationMask m;
    m.id = PlaneU16::Zero(height, width);
    return m;
  }
};

/// Gaussian modulation parameters: peak gain k and width c (pixels at the
/// resolution the volume lives at). k <= 1 would make hints non-peaking.
struct ModulationParams {
  double k = 10.0;
  double c = 1.0;

  void validate() const {
    if (!(k > 1.0)) throw ConfigError("modulation gain k must be > 1");
    if (!(c > 0.0)) throw ConfigError("modulation width c must be > 0");
  }
};

/// Forward-backward consistency tolerance in pixels.
struct ConsistencyConfig {
  double threshold = 3.0;

  void validate() const {
    if (!(threshold > 0.0)) throw ConfigError("consistency threshold must be > 0");
  }
};

/// Grayscale image with intensities in [0, 1].
struct ImageGray {
  PlaneF intensity;

  int width() const { return static_cast<int>(intensity.cols()); }
  int height() const { return static_cast<int>(intensity.rows()); }

  static ImageGray constant(int width, int height, float value) {
    ImageGray img;
    img.intensity = PlaneF::Constant(height, width, value);
    return img;
  }
};

namespace detail {

inline void require(bool cond, const char* msg) {
  if (!cond) throw ShapeError(msg);
}

template <typename A, typename B>
void require_same_shape(const A& a, const B& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string("shape mismatch: ") + what);
}

}  // namespace detail

}  // namespace guidedflow
