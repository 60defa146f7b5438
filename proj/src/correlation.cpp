#include "guidedflow/correlation.hpp"

#include <algorithm>
#include <cmath>

namespace guidedflow {

namespace {

// Zero-mean, unit-norm feature rows. Constant features normalize to the
// zero vector, which makes their ZNCC against anything 0.
RowMatrixXd normalize_rows(const RowMatrixXd& features) {
  RowMatrixXd out(features.rows(), features.cols());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    Eigen::RowVectorXd row = features.row(i);
    row.array() -= row.mean();
    const double norm = row.norm();
    if (norm > 1e-12)
      out.row(i) = row / norm;
    else
      out.row(i).setZero();
  }
  return out;
}

}  // namespace

CorrelationVolume build_volume(const FeatureGrid& f0, const FeatureGrid& f1, int radius,
                               const FlowField& init_flow) {
  if (f0.width != f1.width || f0.height != f1.height || f0.dim != f1.dim)
    throw ShapeError("build_volume: feature grids differ in shape");
  if (radius < 1) throw ConfigError("build_volume: radius must be >= 1");
  if (init_flow.width() != f0.width || init_flow.height() != f0.height)
    throw ShapeError("build_volume: init flow resolution mismatch");

  const int w = f0.width;
  const int h = f0.height;
  CorrelationVolume vol = CorrelationVolume::zeros(w, h, radius);

  const RowMatrixXd n0 = normalize_rows(f0.features);
  const RowMatrixXd n1 = normalize_rows(f1.features);

  const int win = vol.window();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Index p = static_cast<Eigen::Index>(y) * w + x;
      const int bu = static_cast<int>(std::lround(static_cast<double>(init_flow.u(y, x))));
      const int bv = static_cast<int>(std::lround(static_cast<double>(init_flow.v(y, x))));
      vol.base_u(y, x) = bu;
      vol.base_v(y, x) = bv;
      auto row = vol.scores.row(p);
      for (int dy = -radius; dy <= radius; ++dy) {
        const int qy = y + bv + dy;
        if (qy < 0 || qy >= h) continue;
        for (int dx = -radius; dx <= radius; ++dx) {
          const int qx = x + bu + dx;
          if (qx < 0 || qx >= w) continue;
          const Eigen::Index q = static_cast<Eigen::Index>(qy) * w + qx;
          const double zncc = std::clamp(n0.row(p).dot(n1.row(q)), -1.0, 1.0);
          row((dy + radius) * win + (dx + radius)) = 1.0 + zncc;
        }
      }
    }
  }
  return vol;
}

CorrelationVolume modulate_2d(const CorrelationVolume& vol, const SparseHints& hints,
                              const ModulationParams& params) {
  params.validate();
  if (hints.width() != vol.width || hints.height() != vol.height)
    throw ShapeError("modulate_2d: hint resolution mismatch");

  CorrelationVolume out = vol;
  const int win = vol.window();
  const double inv2c2 = 1.0 / (2.0 * params.c * params.c);
  for (int y = 0; y < vol.height; ++y) {
    for (int x = 0; x < vol.width; ++x) {
      if (!hints.v(y, x)) continue;
      const Eigen::Index p = static_cast<Eigen::Index>(y) * vol.width + x;
      const double hx = hints.hx(y, x);
      const double hy = hints.hy(y, x);
      const int bu = vol.base_u(y, x);
      const int bv = vol.base_v(y, x);
      auto row = out.scores.row(p);
      for (int dy = -vol.radius; dy <= vol.radius; ++dy) {
        const double ry = (bv + dy) - hy;
        for (int dx = -vol.radius; dx <= vol.radius; ++dx) {
          const double rx = (bu + dx) - hx;
          const double gain = params.k * std::exp(-(rx * rx + ry * ry) * inv2c2);
          row((dy + vol.radius) * win + (dx + vol.radius)) *= gain;
        }
      }
    }
  }
  return out;
}

RowMatrixXd modulate_1d(const Eigen::Ref<const RowMatrixXd>& costs,
                        const Eigen::Ref<const Eigen::VectorXd>& dstar,
                        const Eigen::Ref<const Eigen::Array<bool, Eigen::Dynamic, 1>>& valid,
                        const ModulationParams& params) {
  params.validate();
  if (costs.cols() < 1) throw ShapeError("modulate_1d: disparity axis must have length >= 1");
  if (dstar.size() != costs.rows() || valid.size() != costs.rows())
    throw ShapeError("modulate_1d: per-pixel hint arrays must match cost rows");

  RowMatrixXd out = costs;
  const double inv2c2 = 1.0 / (2.0 * params.c * params.c);
  for (Eigen::Index p = 0; p < costs.rows(); ++p) {
    if (!valid(p)) continue;
    for (Eigen::Index d = 0; d < costs.cols(); ++d) {
      const double r = static_cast<double>(d) - dstar(p);
      out(p, d) *= params.k * std::exp(-r * r * inv2c2);
    }
  }
  return out;
}

SparseHints downsample_hints(const SparseHints& hints, int factor) {
  if (factor < 1) throw ConfigError("downsample_hints: factor must be >= 1");
  if (factor == 1) return canonicalize(hints);
  const int w = hints.width();
  const int h = hints.height();
  if (w % factor != 0 || h % factor != 0)
    throw ShapeError("downsample_hints: factor must divide both dimensions");

  SparseHints out = SparseHints::none(w / factor, h / factor);
  for (int cy = 0; cy < out.height(); ++cy) {
    for (int cx = 0; cx < out.width(); ++cx) {
      const double centre_x = cx * factor + (factor - 1) / 2.0;
      const double centre_y = cy * factor + (factor - 1) / 2.0;
      double best_d2 = 0.0;
      int best_x = -1, best_y = -1;
      for (int fy = cy * factor; fy < (cy + 1) * factor; ++fy) {
        for (int fx = cx * factor; fx < (cx + 1) * factor; ++fx) {
          if (!hints.v(fy, fx)) continue;
          const double dx = fx - centre_x;
          const double dy = fy - centre_y;
          const double d2 = dx * dx + dy * dy;
          if (best_x < 0 || d2 < best_d2) {
            best_d2 = d2;
            best_x = fx;
            best_y = fy;
          }
        }
      }
      if (best_x >= 0) {
        out.v(cy, cx) = true;
        out.hx(cy, cx) = hints.hx(best_y, best_x) / static_cast<float>(factor);
        out.hy(cy, cx) = hints.hy(best_y, best_x) / static_cast<float>(factor);
      }
    }
  }
  return out;
}

}  // namespace guidedflow
