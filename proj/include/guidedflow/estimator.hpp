#pragma once

#include "guidedflow/correlation.hpp"
#include "guidedflow/types.hpp"

namespace guidedflow {

/// Coarse-to-fine block-matching configuration. `patch` is the odd side of
/// the intensity patch used as the per-pixel feature; `median_filter` is an
/// odd smoothing window applied to the flow after each level, or 0 to skip.
struct PyramidConfig {
  int levels = 3;
  int radius = 4;
  int patch = 7;
  int median_filter = 3;

  void validate() const;
};

/// Feature vector of pixel p = its patch x patch intensity neighborhood
/// (edge-replicated), row-major, dim = patch^2.
FeatureGrid extract_features(const ImageGray& img, int patch);

/// Dense flow by winner-take-all matching over a correlation volume per
/// pyramid level, optionally guided: hints are downsampled to each level and
/// injected through modulate_2d before the argmax. Subpixel refinement fits
/// a 1D parabola per axis around the argmax (offset clamped to +-0.5); a
/// cell already at the perfect-correlation score keeps offset 0, so
/// identical inputs produce exactly zero flow. The returned field is
/// all-valid.
///
/// Ties at the argmax break deterministically: smallest |(dx, dy)| first,
/// then row-major (dy, dx) order, so results do not depend on scheduling.
FlowField estimate(const ImageGray& i0, const ImageGray& i1, const PyramidConfig& cfg,
                   const SparseHints* hints, const ModulationParams& params);

/// estimate(i1, i0, cfg) -- backward flow for any pair.
FlowField estimate_backward(const ImageGray& i0, const ImageGray& i1, const PyramidConfig& cfg);

/// Subpixel peak offset from three samples (s at -1, 0, +1); 0 when the fit
/// is not concave, clamped to [-0.5, 0.5] otherwise.
double parabola_offset(double sm, double s0, double sp);

}  // namespace guidedflow
