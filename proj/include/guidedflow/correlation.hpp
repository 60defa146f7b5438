#pragma once

#include <Eigen/Dense>

#include "guidedflow/types.hpp"

namespace guidedflow {

/// Per-pixel feature vectors (one row of `features` per pixel, row-major
/// pixel order). Backing store for correlation score computation.
struct FeatureGrid {
  int width = 0;
  int height = 0;
  int dim = 0;
  RowMatrixXd features;
};

/// Builds the per-pixel score grid between f0 and f1. The window of pixel p
/// is centred at p + round(init_flow(p)); cell (dx, dy) scores
/// 1 + ZNCC(f0(p), f1(p + round(init_flow(p)) + (dx, dy))) in [0, 2].
/// Zero-variance features have ZNCC 0 by convention and comparisons that
/// fall outside the image score 0.
CorrelationVolume build_volume(const FeatureGrid& f0, const FeatureGrid& f1, int radius,
                               const FlowField& init_flow);

/// Gaussian score modulation over 2D windows. For pixels with a valid hint
/// each cell is multiplied by k * exp(-((x - hx)^2 + (y - hy)^2) / (2 c^2)),
/// where (x, y) is the cell's absolute displacement base + (dx, dy); pixels
/// without a hint pass through untouched.
CorrelationVolume modulate_2d(const CorrelationVolume& vol, const SparseHints& hints,
                              const ModulationParams& params);

/// 1D variant over disparity cost curves: one row of costs per pixel, column
/// d is the cost at disparity d. Modulated cost is
/// (1 - v + v * k * exp(-(d - dstar)^2 / (2 c^2))) * cost.
RowMatrixXd modulate_1d(const Eigen::Ref<const RowMatrixXd>& costs,
                        const Eigen::Ref<const Eigen::VectorXd>& dstar,
                        const Eigen::Ref<const Eigen::Array<bool, Eigen::Dynamic, 1>>& valid,
                        const ModulationParams& params);

/// Nearest-neighbor hint downsampling: each coarse cell takes the hint of
/// the valid fine pixel nearest its centre (ties resolved row-major first)
/// with magnitudes divided by `factor`. Cells whose footprint has no valid
/// pixel come out invalid. `factor` must divide both dimensions.
SparseHints downsample_hints(const SparseHints& hints, int factor);

}  // namespace guidedflow
