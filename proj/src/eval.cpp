#include "guidedflow/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <thread>

#include "guidedflow/fusion.hpp"
#include "guidedflow/random.hpp"
#include "guidedflow/scene.hpp"

namespace guidedflow {

namespace {

struct PixelTotals {
  std::int64_t joint = 0;
  std::int64_t gt_total = 0;
  double err_sum = 0.0;
  std::int64_t outliers = 0;
};

PixelTotals pixel_totals(const FlowField& pred, const FlowField& gt) {
  if (pred.width() != gt.width() || pred.height() != gt.height())
    throw ShapeError("metrics: prediction and ground truth differ in shape");
  PixelTotals totals;
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) {
      if (!gt.valid(y, x)) continue;
      ++totals.gt_total;
      if (!pred.valid(y, x)) continue;
      ++totals.joint;
      const double du = static_cast<double>(pred.u(y, x)) - gt.u(y, x);
      const double dv = static_cast<double>(pred.v(y, x)) - gt.v(y, x);
      const double err = std::sqrt(du * du + dv * dv);
      const double mag = std::sqrt(static_cast<double>(gt.u(y, x)) * gt.u(y, x) +
                                   static_cast<double>(gt.v(y, x)) * gt.v(y, x));
      totals.err_sum += err;
      if (err > 3.0 && err > 0.05 * mag) ++totals.outliers;
    }
  }
  return totals;
}

void append_number(std::string& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  out += buf;
}

}  // namespace

double epe(const FlowField& pred, const FlowField& gt) {
  const PixelTotals t = pixel_totals(pred, gt);
  if (t.joint == 0) throw EmptyInput("epe: no jointly valid pixels");
  return t.err_sum / static_cast<double>(t.joint);
}

double fl(const FlowField& pred, const FlowField& gt) {
  const PixelTotals t = pixel_totals(pred, gt);
  if (t.joint == 0) throw EmptyInput("fl: no jointly valid pixels");
  return 100.0 * static_cast<double>(t.outliers) / static_cast<double>(t.joint);
}

namespace {

struct SceneOutcome {
  std::vector<ImageRecord> records;
  std::vector<std::pair<std::string, PixelTotals>> totals;  // variant -> pixel sums
  int errors = 0;
};

ImageRecord metric_record(const std::string& image, const std::string& variant,
                          const FlowField& pred, const FlowField& gt, PixelTotals& out_totals) {
  const PixelTotals t = pixel_totals(pred, gt);
  if (t.joint == 0) throw EmptyInput("no jointly valid pixels");
  out_totals = t;
  ImageRecord rec;
  rec.image = image;
  rec.variant = variant;
  rec.epe = t.err_sum / static_cast<double>(t.joint);
  rec.fl = 100.0 * static_cast<double>(t.outliers) / static_cast<double>(t.joint);
  rec.density = 100.0 * static_cast<double>(t.joint) / static_cast<double>(t.gt_total);
  return rec;
}

SceneOutcome process_scene(const std::filesystem::path& dataset, const std::string& name,
                           const BenchmarkConfig& cfg) {
  SceneOutcome outcome;
  LoadedScene scene;
  try {
    scene = load_scene(dataset / name);
  } catch (const Error& e) {
    ImageRecord rec;
    rec.image = name;
    rec.variant = "load";
    rec.error = e.what();
    outcome.records.push_back(rec);
    outcome.errors = 1;
    return outcome;
  }

  const std::uint64_t scene_seed = derive_seed(cfg.seed, name);
  FlowField unguided;
  bool have_unguided = false;

  const auto run_variant = [&](const std::string& variant, auto&& fn) {
    try {
      const FlowField pred = fn();
      PixelTotals totals;
      outcome.records.push_back(metric_record(name, variant, pred, scene.gt, totals));
      outcome.totals.emplace_back(variant, totals);
    } catch (const Error& e) {
      ImageRecord rec;
      rec.image = name;
      rec.variant = variant;
      rec.error = e.what();
      outcome.records.push_back(rec);
      ++outcome.errors;
    }
  };

  const auto forward = [&]() {
    if (!have_unguided) {
      unguided = estimate(scene.i0, scene.i1, cfg.pyramid, nullptr, cfg.mod);
      have_unguided = true;
    }
    return unguided;
  };

  if (cfg.unguided) run_variant("unguided", forward);

  if (cfg.gt_guided)
    run_variant("gt_guided", [&]() {
      const SparseHints hints = sample_gt_hints(scene.gt, cfg.density, cfg.noise, scene_seed);
      return estimate(scene.i0, scene.i1, cfg.pyramid, &hints, cfg.mod);
    });

  if (cfg.sensor_guided) {
    if (!scene.d0 || !scene.d1 || !scene.K) {
      ImageRecord rec;
      rec.image = name;
      rec.variant = "sensor_guided";
      rec.error = "missing depth or intrinsics";
      outcome.records.push_back(rec);
      ++outcome.errors;
    } else {
      run_variant("sensor_guided", [&]() {
        EgoHintsConfig ego_cfg = cfg.ego;
        ego_cfg.ransac.seed = scene_seed;
        const EgoHintsResult ego =
            ego_hints_full(*scene.d0, *scene.d1, *scene.K, scene.i0, scene.i1, ego_cfg);
        const FlowField ric = forward();
        const FlowField ric_bwd = estimate_backward(scene.i0, scene.i1, cfg.pyramid);
        const PlaneB ric_mask = fb_consistency(ric, ric_bwd, ego_cfg.consistency);
        const SegmentationMask seg =
            scene.seg ? *scene.seg
                      : SegmentationMask::background(scene.i0.width(), scene.i0.height());
        const SparseHints fused = fuse_hints(ego.filtered, ric, ric_mask, seg);
        return estimate(scene.i0, scene.i1, cfg.pyramid, &fused, cfg.mod);
      });
    }
  }
  return outcome;
}

}  // namespace

EvalReport run_benchmark(const std::filesystem::path& dataset, const BenchmarkConfig& cfg) {
  std::vector<std::string> names = read_manifest(dataset);
  if (names.empty() && std::filesystem::is_directory(dataset)) {
    for (const auto& entry : std::filesystem::directory_iterator(dataset))
      if (entry.is_directory()) names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());

  std::vector<SceneOutcome> outcomes(names.size());
  const int jobs = std::max(1, cfg.jobs);
  if (jobs == 1 || names.size() <= 1) {
    for (std::size_t i = 0; i < names.size(); ++i)
      outcomes[i] = process_scene(dataset, names[i], cfg);
  } else {
    std::atomic<std::size_t> next{0};
    const auto worker = [&]() {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= names.size()) break;
        outcomes[i] = process_scene(dataset, names[i], cfg);
      }
    };
    std::vector<std::thread> pool;
    const int n_threads = std::min<int>(jobs, static_cast<int>(names.size()));
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  EvalReport report;
  std::map<std::string, PixelTotals> pooled;
  for (const SceneOutcome& outcome : outcomes) {
    report.errors += outcome.errors;
    for (const ImageRecord& rec : outcome.records) report.records.push_back(rec);
    for (const auto& [variant, totals] : outcome.totals) {
      PixelTotals& sum = pooled[variant];
      sum.joint += totals.joint;
      sum.gt_total += totals.gt_total;
      sum.err_sum += totals.err_sum;
      sum.outliers += totals.outliers;
    }
  }

  std::map<std::string, std::vector<const ImageRecord*>> by_variant;
  for (const ImageRecord& rec : report.records)
    if (rec.error.empty()) by_variant[rec.variant].push_back(&rec);

  for (const auto& [variant, recs] : by_variant) {
    VariantAggregate agg;
    agg.variant = variant;
    agg.images = static_cast<int>(recs.size());
    if (cfg.pooled) {
      const PixelTotals& t = pooled[variant];
      if (t.joint > 0) {
        agg.epe = t.err_sum / static_cast<double>(t.joint);
        agg.fl = 100.0 * static_cast<double>(t.outliers) / static_cast<double>(t.joint);
        agg.density = 100.0 * static_cast<double>(t.joint) / static_cast<double>(t.gt_total);
      }
    } else {
      for (const ImageRecord* rec : recs) {
        agg.epe += rec->epe;
        agg.fl += rec->fl;
        agg.density += rec->density;
      }
      if (!recs.empty()) {
        agg.epe /= static_cast<double>(recs.size());
        agg.fl /= static_cast<double>(recs.size());
        agg.density /= static_cast<double>(recs.size());
      }
    }
    report.aggregates.push_back(agg);
  }
  return report;
}

std::string report_csv(const EvalReport& report, const std::vector<std::string>& provenance) {
  std::string out;
  for (const auto& line : provenance) out += "# " + line + "\n";
  out += "image,variant,epe,fl,density,error\n";
  for (const ImageRecord& rec : report.records) {
    out += rec.image + ',' + rec.variant + ',';
    if (rec.error.empty()) {
      append_number(out, rec.epe);
      out += ',';
      append_number(out, rec.fl);
      out += ',';
      append_number(out, rec.density);
      out += ',';
    } else {
      std::string sanitized = rec.error;
      for (char& c : sanitized)
        if (c == ',' || c == '\n') c = ';';
      out += ",,," + sanitized;
    }
    out += '\n';
  }
  for (const VariantAggregate& agg : report.aggregates) {
    out += "aggregate," + agg.variant + ',';
    append_number(out, agg.epe);
    out += ',';
    append_number(out, agg.fl);
    out += ',';
    append_number(out, agg.density);
    out += ",\n";
  }
  return out;
}

}  // namespace guidedflow
