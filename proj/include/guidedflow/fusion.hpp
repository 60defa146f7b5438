#pragma once

#include <cstdint>

#include "guidedflow/types.hpp"

namespace guidedflow {

/// Segmentation-gated hint fusion: background pixels (seg == 0) keep the ego
/// hint, foreground pixels take the estimator flow instead -- valid only
/// where its consistency mask holds and an ego hint existed, so the guide
/// never exceeds the sensor support.
SparseHints fuse_hints(const SparseHints& ego, const FlowField& ric, const PlaneB& ric_fb_mask,
                       const SegmentationMask& seg);

/// Samples exactly round(density * #valid) ground-truth pixels uniformly
/// without replacement and perturbs each component with i.i.d. uniform noise
/// in [-noise, noise]. Bit-reproducible for a given seed.
SparseHints sample_gt_hints(const FlowField& gt, double density, double noise,
                            std::uint64_t seed);

struct HintStats {
  double epe = 0.0;      // pixels
  double fl = 0.0;       // percent
  double density = 0.0;  // percent of ground-truth-valid pixels carrying a hint
};

/// Metrics over the intersection of hint validity and ground-truth validity.
HintStats hint_stats(const SparseHints& hints, const FlowField& gt);

/// Treats a dense flow field as a hint source restricted to `validity`.
SparseHints hints_from_flow(const FlowField& flow, const PlaneB& validity);

}  // namespace guidedflow
