#include "guidedflow/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "guidedflow/random.hpp"

namespace guidedflow {

SparseHints fuse_hints(const SparseHints& ego, const FlowField& ric, const PlaneB& ric_fb_mask,
                       const SegmentationMask& seg) {
  const int w = ego.width();
  const int h = ego.height();
  if (ric.width() != w || ric.height() != h || seg.width() != w || seg.height() != h ||
      static_cast<int>(ric_fb_mask.cols()) != w || static_cast<int>(ric_fb_mask.rows()) != h)
    throw ShapeError("fuse_hints: input resolutions differ");

  SparseHints out = SparseHints::none(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (seg.id(y, x) == 0) {
        if (ego.v(y, x)) {
          out.v(y, x) = true;
          out.hx(y, x) = ego.hx(y, x);
          out.hy(y, x) = ego.hy(y, x);
        }
      } else if (ric_fb_mask(y, x) && ego.v(y, x) && ric.valid(y, x)) {
        // Foreground keeps the sensor support: estimator flow, but only at
        // pixels the ego guide covered.
        out.v(y, x) = true;
        out.hx(y, x) = ric.u(y, x);
        out.hy(y, x) = ric.v(y, x);
      }
    }
  }
  return out;
}

SparseHints sample_gt_hints(const FlowField& gt, double density, double noise,
                            std::uint64_t seed) {
  if (!(density > 0.0) || density > 1.0)
    throw ConfigError("sample_gt_hints: density must be in (0, 1]");
  if (noise < 0.0) throw ConfigError("sample_gt_hints: noise must be >= 0");

  const int w = gt.width();
  const int h = gt.height();
  std::vector<std::int64_t> valid_idx;
  valid_idx.reserve(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (gt.valid(y, x)) valid_idx.push_back(static_cast<std::int64_t>(y) * w + x);
  if (valid_idx.empty()) throw EmptyInput("sample_gt_hints: ground truth has no valid pixels");

  const auto target =
      static_cast<std::size_t>(std::llround(density * static_cast<double>(valid_idx.size())));
  const std::size_t n = std::min(target, valid_idx.size());

  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + uniform_below(rng, valid_idx.size() - i);
    std::swap(valid_idx[i], valid_idx[j]);
  }
  std::vector<std::int64_t> chosen(valid_idx.begin(),
                                   valid_idx.begin() + static_cast<std::ptrdiff_t>(n));
  std::sort(chosen.begin(), chosen.end());

  SparseHints out = SparseHints::none(w, h);
  for (const std::int64_t idx : chosen) {
    const int y = static_cast<int>(idx / w);
    const int x = static_cast<int>(idx % w);
    const double ex = noise * (2.0 * uniform01(rng) - 1.0);
    const double ey = noise * (2.0 * uniform01(rng) - 1.0);
    out.v(y, x) = true;
    out.hx(y, x) = static_cast<float>(gt.u(y, x) + ex);
    out.hy(y, x) = static_cast<float>(gt.v(y, x) + ey);
  }
  return out;
}

HintStats hint_stats(const SparseHints& hints, const FlowField& gt) {
  const int w = hints.width();
  const int h = hints.height();
  if (gt.width() != w || gt.height() != h) throw ShapeError("hint_stats: resolutions differ");

  std::int64_t gt_count = 0;
  std::int64_t joint = 0;
  double err_sum = 0.0;
  std::int64_t outliers = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!gt.valid(y, x)) continue;
      ++gt_count;
      if (!hints.v(y, x)) continue;
      ++joint;
      const double du = static_cast<double>(hints.hx(y, x)) - gt.u(y, x);
      const double dv = static_cast<double>(hints.hy(y, x)) - gt.v(y, x);
      const double err = std::sqrt(du * du + dv * dv);
      const double mag = std::sqrt(static_cast<double>(gt.u(y, x)) * gt.u(y, x) +
                                   static_cast<double>(gt.v(y, x)) * gt.v(y, x));
      err_sum += err;
      if (err > 3.0 && err > 0.05 * mag) ++outliers;
    }
  }
  if (joint == 0) throw EmptyInput("hint_stats: no pixel has both a hint and ground truth");

  HintStats stats;
  stats.epe = err_sum / static_cast<double>(joint);
  stats.fl = 100.0 * static_cast<double>(outliers) / static_cast<double>(joint);
  stats.density = 100.0 * static_cast<double>(joint) / static_cast<double>(gt_count);
  return stats;
}

SparseHints hints_from_flow(const FlowField& flow, const PlaneB& validity) {
  if (static_cast<int>(validity.cols()) != flow.width() ||
      static_cast<int>(validity.rows()) != flow.height())
    throw ShapeError("hints_from_flow: mask resolution mismatch");
  SparseHints out;
  out.hx = flow.u;
  out.hy = flow.v;
  out.v = flow.valid && validity;
  return canonicalize(out);
}

}  // namespace guidedflow
