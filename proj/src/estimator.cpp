#include "guidedflow/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace guidedflow {

void PyramidConfig::validate() const {
  if (levels < 1) throw ConfigError("pyramid: levels must be >= 1");
  if (radius < 1) throw ConfigError("pyramid: radius must be >= 1");
  if (patch < 3 || patch % 2 == 0) throw ConfigError("pyramid: patch must be odd and >= 3");
  if (median_filter != 0 && (median_filter < 3 || median_filter % 2 == 0))
    throw ConfigError("pyramid: median filter must be 0 or odd >= 3");
}

FeatureGrid extract_features(const ImageGray& img, int patch) {
  if (patch < 3 || patch % 2 == 0) throw ConfigError("extract_features: patch must be odd >= 3");
  const int w = img.width();
  const int h = img.height();
  const int half = patch / 2;

  FeatureGrid grid;
  grid.width = w;
  grid.height = h;
  grid.dim = patch * patch;
  grid.features.resize(static_cast<Eigen::Index>(w) * h, grid.dim);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Index p = static_cast<Eigen::Index>(y) * w + x;
      int c = 0;
      for (int dy = -half; dy <= half; ++dy) {
        const int sy = std::clamp(y + dy, 0, h - 1);
        for (int dx = -half; dx <= half; ++dx) {
          const int sx = std::clamp(x + dx, 0, w - 1);
          grid.features(p, c++) = img.intensity(sy, sx);
        }
      }
    }
  }
  return grid;
}

double parabola_offset(double sm, double s0, double sp) {
  const double denom = sm - 2.0 * s0 + sp;
  if (!(denom < 0.0)) return 0.0;  // not concave
  const double offset = 0.5 * (sm - sp) / denom;
  return std::clamp(offset, -0.5, 0.5);
}

namespace {

ImageGray downscale2x(const ImageGray& img) {
  const int w = (img.width() + 1) / 2;
  const int h = (img.height() + 1) / 2;
  ImageGray out = ImageGray::constant(w, h, 0.0f);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int y0 = 2 * y;
      const int x0 = 2 * x;
      const int y1 = std::min(y0 + 1, img.height() - 1);
      const int x1 = std::min(x0 + 1, img.width() - 1);
      out.intensity(y, x) =
          0.25f * (img.intensity(y0, x0) + img.intensity(y0, x1) + img.intensity(y1, x0) +
                   img.intensity(y1, x1));
    }
  }
  return out;
}

struct FlowD {
  PlaneD u;
  PlaneD v;
};

FlowD upsample2x(const FlowD& flow, int out_w, int out_h) {
  FlowD out{PlaneD::Zero(out_h, out_w), PlaneD::Zero(out_h, out_w)};
  const int in_w = static_cast<int>(flow.u.cols());
  const int in_h = static_cast<int>(flow.u.rows());
  for (int y = 0; y < out_h; ++y) {
    const int sy = std::min(y / 2, in_h - 1);
    for (int x = 0; x < out_w; ++x) {
      const int sx = std::min(x / 2, in_w - 1);
      out.u(y, x) = 2.0 * flow.u(sy, sx);
      out.v(y, x) = 2.0 * flow.v(sy, sx);
    }
  }
  return out;
}

// Winner-take-all plus per-axis parabola refinement over a (possibly
// modulated) volume. Tie-breaking: higher score, then smaller displacement
// norm, then first in row-major (dy, dx) order. `raw` holds the
// pre-modulation scores; a cell already at the perfect-correlation score
// cannot be improved, so its subpixel offset stays 0.
FlowD wta_refine(const CorrelationVolume& vol, const RowMatrixXd& raw) {
  FlowD flow{PlaneD::Zero(vol.height, vol.width), PlaneD::Zero(vol.height, vol.width)};
  const int r = vol.radius;
  for (int y = 0; y < vol.height; ++y) {
    for (int x = 0; x < vol.width; ++x) {
      const Eigen::Index p = static_cast<Eigen::Index>(y) * vol.width + x;
      const auto row = vol.scores.row(p);
      double best = -1.0;
      long best_norm2 = 0;
      int best_dx = 0, best_dy = 0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const double s = row(vol.cell_index(dx, dy));
          const long norm2 = static_cast<long>(dx) * dx + static_cast<long>(dy) * dy;
          if (s > best || (s == best && norm2 < best_norm2)) {
            best = s;
            best_norm2 = norm2;
            best_dx = dx;
            best_dy = dy;
          }
        }
      }
      double off_x = 0.0, off_y = 0.0;
      const bool exact_peak = raw(p, vol.cell_index(best_dx, best_dy)) >= 2.0 - 1e-9;
      if (!exact_peak) {
        if (best_dx > -r && best_dx < r)
          off_x = parabola_offset(row(vol.cell_index(best_dx - 1, best_dy)), best,
                                  row(vol.cell_index(best_dx + 1, best_dy)));
        if (best_dy > -r && best_dy < r)
          off_y = parabola_offset(row(vol.cell_index(best_dx, best_dy - 1)), best,
                                  row(vol.cell_index(best_dx, best_dy + 1)));
      }
      flow.u(y, x) = vol.base_u(y, x) + best_dx + off_x;
      flow.v(y, x) = vol.base_v(y, x) + best_dy + off_y;
    }
  }
  return flow;
}

PlaneD median_plane(const PlaneD& in, int k) {
  const int w = static_cast<int>(in.cols());
  const int h = static_cast<int>(in.rows());
  const int half = k / 2;
  PlaneD out(h, w);
  std::vector<double> window(static_cast<std::size_t>(k) * k);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::size_t n = 0;
      for (int dy = -half; dy <= half; ++dy) {
        const int sy = std::clamp(y + dy, 0, h - 1);
        for (int dx = -half; dx <= half; ++dx) {
          const int sx = std::clamp(x + dx, 0, w - 1);
          window[n++] = in(sy, sx);
        }
      }
      auto mid = window.begin() + static_cast<std::ptrdiff_t>(n / 2);
      std::nth_element(window.begin(), mid, window.begin() + static_cast<std::ptrdiff_t>(n));
      out(y, x) = *mid;
    }
  }
  return out;
}

}  // namespace

FlowField estimate(const ImageGray& i0, const ImageGray& i1, const PyramidConfig& cfg,
                   const SparseHints* hints, const ModulationParams& params) {
  cfg.validate();
  if (i0.width() != i1.width() || i0.height() != i1.height())
    throw ShapeError("estimate: image sizes differ");
  if (hints) {
    params.validate();
    if (hints->width() != i0.width() || hints->height() != i0.height())
      throw ShapeError("estimate: hints must be at full resolution");
    const int top_factor = 1 << (cfg.levels - 1);
    if (i0.width() % top_factor != 0 || i0.height() % top_factor != 0)
      throw ShapeError("estimate: guided use needs dimensions divisible by 2^(levels-1)");
  }

  std::vector<ImageGray> pyr0{i0}, pyr1{i1};
  for (int l = 1; l < cfg.levels; ++l) {
    pyr0.push_back(downscale2x(pyr0.back()));
    pyr1.push_back(downscale2x(pyr1.back()));
  }

  FlowD flow;
  for (int l = cfg.levels - 1; l >= 0; --l) {
    const ImageGray& a = pyr0[static_cast<std::size_t>(l)];
    const ImageGray& b = pyr1[static_cast<std::size_t>(l)];
    FlowField init = FlowField::zeros(a.width(), a.height(), true);
    if (l < cfg.levels - 1) {
      const FlowD up = upsample2x(flow, a.width(), a.height());
      for (int y = 0; y < a.height(); ++y)
        for (int x = 0; x < a.width(); ++x) {
          init.u(y, x) = static_cast<float>(up.u(y, x));
          init.v(y, x) = static_cast<float>(up.v(y, x));
        }
    }

    const FeatureGrid f0 = extract_features(a, cfg.patch);
    const FeatureGrid f1 = extract_features(b, cfg.patch);
    CorrelationVolume vol = build_volume(f0, f1, cfg.radius, init);
    const RowMatrixXd raw_scores = vol.scores;
    if (hints) {
      const SparseHints level_hints = downsample_hints(*hints, 1 << l);
      vol = modulate_2d(vol, level_hints, params);
    }
    flow = wta_refine(vol, raw_scores);
    if (cfg.median_filter > 0) {
      flow.u = median_plane(flow.u, cfg.median_filter);
      flow.v = median_plane(flow.v, cfg.median_filter);
    }
  }

  FlowField out = FlowField::zeros(i0.width(), i0.height(), true);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      out.u(y, x) = static_cast<float>(flow.u(y, x));
      out.v(y, x) = static_cast<float>(flow.v(y, x));
    }
  return out;
}

FlowField estimate_backward(const ImageGray& i0, const ImageGray& i1, const PyramidConfig& cfg) {
  return estimate(i1, i0, cfg, nullptr, ModulationParams{});
}

}  // namespace guidedflow
