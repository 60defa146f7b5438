#include "guidedflow/types.hpp"

#include <cmath>

namespace guidedflow {

FlowField canonicalize(const FlowField& field) {
  detail::require_same_shape(field.u, field.v, "flow u/v");
  detail::require_same_shape(field.u, field.valid, "flow value/valid");
  FlowField out = field;
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      if (!out.valid(y, x)) {
        out.u(y, x) = 0.0f;
        out.v(y, x) = 0.0f;
      }
  return out;
}

SparseHints canonicalize(const SparseHints& hints) {
  detail::require_same_shape(hints.hx, hints.hy, "hint hx/hy");
  detail::require_same_shape(hints.hx, hints.v, "hint value/valid");
  SparseHints out = hints;
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      if (!out.v(y, x)) {
        out.hx(y, x) = 0.0f;
        out.hy(y, x) = 0.0f;
      }
  return out;
}

Eigen::Matrix3d axis_angle_rotation(const Eigen::Vector3d& axis_angle) {
  const double angle = axis_angle.norm();
  if (angle < 1e-300) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
}

}  // namespace guidedflow
