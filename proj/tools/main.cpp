#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <thread>
#include <type_traits>

#include "guidedflow/eval.hpp"
#include "guidedflow/fusion.hpp"
#include "guidedflow/io.hpp"
#include "guidedflow/random.hpp"
#include "guidedflow/scene.hpp"

namespace fs = std::filesystem;
using namespace guidedflow;

namespace {

struct CommonOptions {
  std::uint64_t seed = 0;
  double density = 0.03;
  double noise = 3.0;
  double k = 10.0;
  double c = 1.0;
  int radius = 4;
  int levels = 3;
  int patch = 7;
  int median = 3;
  double fb_threshold = 3.0;
  int jobs = 1;

  PyramidConfig pyramid() const { return PyramidConfig{levels, radius, patch, median}; }
  ModulationParams modulation() const { return ModulationParams{k, c}; }
  ConsistencyConfig consistency() const { return ConsistencyConfig{fb_threshold}; }

  std::vector<std::string> provenance(const std::string& command) const {
    char buf[64];
    std::vector<std::string> lines;
    lines.push_back("command=" + command);
    lines.push_back("seed=" + std::to_string(seed));
    std::snprintf(buf, sizeof(buf), "density=%.6f", density);
    lines.push_back(buf);
    std::snprintf(buf, sizeof(buf), "noise=%.6f", noise);
    lines.push_back(buf);
    std::snprintf(buf, sizeof(buf), "k=%.6f", k);
    lines.push_back(buf);
    std::snprintf(buf, sizeof(buf), "c=%.6f", c);
    lines.push_back(buf);
    lines.push_back("radius=" + std::to_string(radius));
    lines.push_back("levels=" + std::to_string(levels));
    lines.push_back("patch=" + std::to_string(patch));
    lines.push_back("median=" + std::to_string(median));
    std::snprintf(buf, sizeof(buf), "fb_threshold=%.6f", fb_threshold);
    lines.push_back(buf);
    return lines;
  }
};

// Plain key=value configuration, overridden by command-line flags.
struct ConfigBinding {
  CLI::Option* option;
  std::string key;
  std::function<void(const std::string&)> apply;
};

struct CommonCli {
  std::string config_path;
  std::vector<ConfigBinding> bindings;
};

void add_common_options(CLI::App* cmd, CommonOptions& opt, CommonCli& cli) {
  const auto numeric = [](auto& slot) {
    return [&slot](const std::string& v) {
      try {
        if constexpr (std::is_same_v<std::decay_t<decltype(slot)>, std::uint64_t>)
          slot = std::stoull(v);
        else if constexpr (std::is_same_v<std::decay_t<decltype(slot)>, int>)
          slot = std::stoi(v);
        else
          slot = std::stod(v);
      } catch (const std::exception&) {
        throw ConfigError("config: bad numeric value '" + v + "'");
      }
    };
  };
  const auto bind = [&cli, &numeric](CLI::Option* option, const std::string& key, auto& slot) {
    cli.bindings.push_back({option, key, numeric(slot)});
  };
  bind(cmd->add_option("--seed", opt.seed, "Base RNG seed"), "seed", opt.seed);
  bind(cmd->add_option("--density", opt.density, "Ground-truth hint sampling density"), "density",
       opt.density);
  bind(cmd->add_option("--noise", opt.noise, "Hint perturbation amplitude (px)"), "noise",
       opt.noise);
  bind(cmd->add_option("--k", opt.k, "Modulation peak gain"), "k", opt.k);
  bind(cmd->add_option("--c", opt.c, "Modulation Gaussian width (px)"), "c", opt.c);
  bind(cmd->add_option("--radius", opt.radius, "Search radius per pyramid level"), "radius",
       opt.radius);
  bind(cmd->add_option("--levels", opt.levels, "Pyramid levels"), "levels", opt.levels);
  bind(cmd->add_option("--patch", opt.patch, "Feature patch side (odd)"), "patch", opt.patch);
  bind(cmd->add_option("--median", opt.median, "Median filter window (0 = off)"), "median",
       opt.median);
  bind(cmd->add_option("--fb-threshold", opt.fb_threshold, "Forward-backward tolerance (px)"),
       "fb_threshold", opt.fb_threshold);
  bind(cmd->add_option("--jobs", opt.jobs, "Scene-level parallelism")
           ->envname("GUIDED_FLOW_JOBS"),
       "jobs", opt.jobs);
  cmd->add_option("--config", cli.config_path,
                  "Configuration file (key=value lines; flags take precedence)");
}

void apply_config_file(const CommonCli& cli) {
  if (cli.config_path.empty()) return;
  const auto bytes = io::load_bytes(cli.config_path);
  std::string text(bytes.begin(), bytes.end());
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    while (!line.empty() && line.front() == ' ') line.erase(line.begin());
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config: expected key=value, got '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    bool known = false;
    for (const auto& binding : cli.bindings)
      if (binding.key == key) {
        known = true;
        if (binding.option->count() == 0) binding.apply(value);
        break;
      }
    if (!known) throw ConfigError("config: unknown key '" + key + "'");
  }
}

// Scene-parallel map; output slots are indexed so merged results do not
// depend on the schedule.
template <typename Fn>
void for_each_scene(const std::vector<std::string>& names, int jobs, Fn&& fn) {
  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(names.size())));
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < names.size(); ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n_threads));
  for (int t = 0; t < n_threads; ++t)
    pool.emplace_back([&]() {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= names.size()) break;
        fn(i);
      }
    });
  for (auto& t : pool) t.join();
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string sanitize(std::string reason) {
  for (char& ch : reason)
    if (ch == ',' || ch == '\n') ch = ';';
  return reason;
}

// --------------------------------------------------------------------------
// generate

SceneSpec spec_from_json(const nlohmann::json& j) {
  SceneSpec spec;
  spec.width = j.value("width", 256);
  spec.height = j.value("height", 256);
  spec.K.fx = j.value("fx", 200.0);
  spec.K.fy = j.value("fy", spec.K.fx);
  spec.K.cx = j.value("cx", (spec.width - 1) / 2.0);
  spec.K.cy = j.value("cy", (spec.height - 1) / 2.0);
  const std::string layout = j.value("layout", "ground-wall");
  if (layout == "ground-wall")
    spec.layout = BackgroundLayout::GroundWall;
  else if (layout == "fronto")
    spec.layout = BackgroundLayout::FrontoPlane;
  else
    throw ConfigError("scene spec: unknown layout '" + layout + "'");
  spec.plane_depth = j.value("plane_depth", 4.0);
  spec.ground_height = j.value("ground_height", 1.5);
  spec.texture_seed = j.value("texture_seed", std::uint64_t{1});
  spec.sensor_seed = j.value("sensor_seed", std::uint64_t{1});
  spec.depth_sparsity = j.value("depth_sparsity", 0.05);
  spec.depth_noise = j.value("depth_noise", 0.01);
  const std::string sampling = j.value("depth_sampling", "scanlines");
  if (sampling == "scanlines")
    spec.depth_sampling = DepthSampling::Scanlines;
  else if (sampling == "uniform")
    spec.depth_sampling = DepthSampling::Uniform;
  else
    throw ConfigError("scene spec: unknown depth sampling '" + sampling + "'");

  constexpr double kDeg = 3.14159265358979323846 / 180.0;
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  if (j.contains("rotation_deg"))
    for (int i = 0; i < 3; ++i) omega(i) = j["rotation_deg"].at(i).get<double>() * kDeg;
  if (j.contains("translation"))
    for (int i = 0; i < 3; ++i) t(i) = j["translation"].at(i).get<double>();
  spec.pose = RigidPose(axis_angle_rotation(omega), t);

  for (const auto& obj_json : j.value("objects", nlohmann::json::array())) {
    ObjectSpec obj;
    obj.x = obj_json.at("x").get<int>();
    obj.y = obj_json.at("y").get<int>();
    obj.w = obj_json.at("w").get<int>();
    obj.h = obj_json.at("h").get<int>();
    obj.depth = obj_json.value("depth", 1.5);
    obj.mx = obj_json.value("mx", 0.0);
    obj.my = obj_json.value("my", 0.0);
    obj.texture_seed = obj_json.value("texture_seed", std::uint64_t{7});
    spec.objects.push_back(obj);
  }
  return spec;
}

int cmd_generate(const std::string& preset, const std::string& spec_file, int count,
                 const CommonOptions& opt, const fs::path& out) {
  std::vector<SceneSpec> specs;
  if (!spec_file.empty()) {
    const auto bytes = io::load_bytes(spec_file);
    const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
    for (const auto& scene_json : j.at("scenes")) specs.push_back(spec_from_json(scene_json));
    if (count >= 0 && static_cast<std::size_t>(count) < specs.size())
      specs.resize(static_cast<std::size_t>(count));
  } else {
    specs = preset_scenes(preset, count, opt.seed);
  }

  fs::create_directories(out);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scene_%03zu", i);
    names.emplace_back(buf);
  }

  std::atomic<int> failures{0};
  for_each_scene(names, opt.jobs, [&](std::size_t i) {
    try {
      write_scene(out / names[i], make_scene(specs[i], names[i]));
    } catch (const std::exception& e) {
      std::fprintf(stderr, "generate: %s failed: %s\n", names[i].c_str(), e.what());
      failures.fetch_add(1);
    }
  });
  write_manifest(out, names);
  if (names.empty()) std::fprintf(stderr, "generate: warning: no scenes requested\n");
  std::printf("generate: wrote %zu scene(s) to %s\n", names.size(), out.string().c_str());
  return failures.load() == 0 ? 0 : 1;
}

// --------------------------------------------------------------------------
// hints

struct HintStatsRow {
  std::string image;
  std::string source;
  bool ok = false;
  HintStats stats;
  std::string error;
};

int cmd_hints(const fs::path& scenes, const fs::path& out, bool use_dataset_pose,
              const CommonOptions& opt) {
  const auto names = read_manifest(scenes);
  fs::create_directories(out);

  std::vector<std::vector<HintStatsRow>> rows(names.size());
  std::atomic<int> failures{0};

  for_each_scene(names, opt.jobs, [&](std::size_t i) {
    const std::string& name = names[i];
    std::vector<HintStatsRow>& scene_rows = rows[i];
    try {
      const LoadedScene scene = load_scene(scenes / name);
      if (!scene.d0 || !scene.d1 || !scene.K)
        throw EmptyInput("scene lacks depth or intrinsics");

      EgoHintsConfig ego_cfg;
      ego_cfg.ransac.seed = derive_seed(opt.seed, name);
      ego_cfg.consistency = opt.consistency();
      if (use_dataset_pose) {
        if (!scene.pose) throw EmptyInput("scene lacks a pose file");
        ego_cfg.pose = scene.pose;
      }
      const EgoHintsResult ego =
          ego_hints_full(*scene.d0, *scene.d1, *scene.K, scene.i0, scene.i1, ego_cfg);

      const PyramidConfig pyr = opt.pyramid();
      const FlowField ric = estimate(scene.i0, scene.i1, pyr, nullptr, opt.modulation());
      const FlowField ric_bwd = estimate_backward(scene.i0, scene.i1, pyr);
      const PlaneB ric_mask = fb_consistency(ric, ric_bwd, opt.consistency());
      const SegmentationMask seg =
          scene.seg ? *scene.seg
                    : SegmentationMask::background(scene.i0.width(), scene.i0.height());
      const SparseHints fused = fuse_hints(ego.filtered, ric, ric_mask, seg);

      const fs::path dir = out / name;
      fs::create_directories(dir);
      const auto hints_png = [&dir](const char* file, const SparseHints& h) {
        FlowField f;
        f.u = h.hx;
        f.v = h.hy;
        f.valid = h.v;
        io::save_bytes(dir / file, io::write_kitti_png(f));
      };
      hints_png("hints_ego_raw.png", ego.unfiltered);
      hints_png("hints_ego.png", ego.filtered);
      hints_png("hints_fused.png", fused);
      io::save_bytes(dir / "ric.flo", io::write_flo(ric));
      SegmentationMask mask_png = SegmentationMask::background(ric.width(), ric.height());
      for (int y = 0; y < ric.height(); ++y)
        for (int x = 0; x < ric.width(); ++x) mask_png.id(y, x) = ric_mask(y, x) ? 1 : 0;
      io::save_bytes(dir / "ric_mask.png", io::write_mask(mask_png));

      const auto stats_row = [&](const char* source, const SparseHints& h) {
        HintStatsRow row;
        row.image = name;
        row.source = source;
        try {
          row.stats = hint_stats(h, scene.gt);
          row.ok = true;
        } catch (const Error& e) {
          row.error = e.what();
        }
        scene_rows.push_back(row);
      };
      stats_row("ego_raw", ego.unfiltered);
      stats_row("ego_filtered", ego.filtered);
      stats_row("estimator", hints_from_flow(ric, ric_mask));
      stats_row("fused", fused);
    } catch (const std::exception& e) {
      HintStatsRow row;
      row.image = name;
      row.source = "scene";
      row.error = sanitize(e.what());
      scene_rows.push_back(row);
      failures.fetch_add(1);
    }
  });

  std::string csv;
  for (const auto& line : opt.provenance("hints")) csv += "# " + line + "\n";
  csv += "image,source,epe,fl,density\n";
  std::map<std::string, std::pair<int, HintStats>> agg;
  for (const auto& scene_rows : rows)
    for (const auto& row : scene_rows) {
      if (!row.ok) {
        csv += row.image + ',' + row.source + ",,,\n";
        continue;
      }
      csv += row.image + ',' + row.source + ',' + format_number(row.stats.epe) + ',' +
             format_number(row.stats.fl) + ',' + format_number(row.stats.density) + '\n';
      auto& [n, sum] = agg[row.source];
      ++n;
      sum.epe += row.stats.epe;
      sum.fl += row.stats.fl;
      sum.density += row.stats.density;
    }
  for (const auto& [source, acc] : agg) {
    const auto& [n, sum] = acc;
    csv += "aggregate," + source + ',' + format_number(sum.epe / n) + ',' +
           format_number(sum.fl / n) + ',' + format_number(sum.density / n) + '\n';
  }
  io::save_text(out / "hint_stats.csv", csv);
  std::printf("hints: processed %zu scene(s), %d failure(s)\n", names.size(), failures.load());
  return failures.load() == 0 ? 0 : 1;
}

// --------------------------------------------------------------------------
// flow

int cmd_flow(const fs::path& scenes, const std::string& hints_dir, const fs::path& out,
             const CommonOptions& opt) {
  const auto names = read_manifest(scenes);
  fs::create_directories(out);

  std::vector<std::string> log(names.size());
  std::atomic<int> failures{0};

  for_each_scene(names, opt.jobs, [&](std::size_t i) {
    const std::string& name = names[i];
    std::string& scene_log = log[i];
    try {
      const LoadedScene scene = load_scene(scenes / name);
      const fs::path dir = out / name;
      fs::create_directories(dir);
      const PyramidConfig pyr = opt.pyramid();

      const FlowField unguided = estimate(scene.i0, scene.i1, pyr, nullptr, opt.modulation());
      io::save_bytes(dir / "unguided.flo", io::write_flo(unguided));
      scene_log += name + ",unguided,ok\n";

      const SparseHints gt_hints =
          sample_gt_hints(scene.gt, opt.density, opt.noise, derive_seed(opt.seed, name));
      const FlowField gt_guided = estimate(scene.i0, scene.i1, pyr, &gt_hints, opt.modulation());
      io::save_bytes(dir / "gt_guided.flo", io::write_flo(gt_guided));
      scene_log += name + ",gt_guided,ok\n";

      const fs::path fused_path = fs::path(hints_dir) / name / "hints_fused.png";
      if (!hints_dir.empty() && fs::exists(fused_path)) {
        const FlowField fused_flow = io::read_kitti_png(io::load_bytes(fused_path));
        SparseHints fused;
        fused.hx = fused_flow.u;
        fused.hy = fused_flow.v;
        fused.v = fused_flow.valid;
        const FlowField sensor = estimate(scene.i0, scene.i1, pyr, &fused, opt.modulation());
        io::save_bytes(dir / "sensor_guided.flo", io::write_flo(sensor));
        scene_log += name + ",sensor_guided,ok\n";
      } else {
        scene_log += name + ",sensor_guided,skipped: no fused hints\n";
      }
    } catch (const std::exception& e) {
      scene_log += name + ",scene,error: " + sanitize(e.what()) + "\n";
      failures.fetch_add(1);
    }
  });

  std::string log_csv;
  for (const auto& line : opt.provenance("flow")) log_csv += "# " + line + "\n";
  log_csv += "image,variant,status\n";
  for (const auto& entry : log) log_csv += entry;
  io::save_text(out / "flow_log.csv", log_csv);
  std::printf("flow: processed %zu scene(s), %d failure(s)\n", names.size(), failures.load());
  return failures.load() == 0 ? 0 : 1;
}

// --------------------------------------------------------------------------
// eval

int cmd_eval(const fs::path& scenes, const fs::path& flows, const fs::path& out, bool error_maps,
             bool pooled, const CommonOptions& opt) {
  const auto names = read_manifest(scenes);
  fs::create_directories(out);
  static const std::vector<std::string> kVariants = {"unguided", "gt_guided", "sensor_guided"};

  struct EvalRow {
    std::string variant;
    bool ok = false;
    double epe = 0.0, fl = 0.0, density = 0.0;
    std::int64_t joint = 0;
    std::string note;
  };
  std::vector<std::vector<EvalRow>> rows(names.size());
  std::atomic<int> failures{0};

  for_each_scene(names, opt.jobs, [&](std::size_t i) {
    const std::string& name = names[i];
    try {
      const FlowField gt = io::read_flo(io::load_bytes(scenes / name / "flow_gt.flo"));
      for (const std::string& variant : kVariants) {
        const fs::path file = flows / name / (variant + ".flo");
        EvalRow row;
        row.variant = variant;
        if (!fs::exists(file)) {
          row.note = "skipped: missing " + variant + ".flo";
          rows[i].push_back(row);
          continue;
        }
        try {
          const FlowField pred = io::read_flo(io::load_bytes(file));
          row.epe = epe(pred, gt);
          row.fl = fl(pred, gt);
          for (int y = 0; y < gt.height(); ++y)
            for (int x = 0; x < gt.width(); ++x)
              if (gt.valid(y, x) && pred.valid(y, x)) ++row.joint;
          const auto gt_count = gt.valid.count();
          row.density = 100.0 * static_cast<double>(row.joint) /
                        static_cast<double>(gt_count > 0 ? gt_count : 1);
          row.ok = true;
          if (error_maps) {
            FlowField err = FlowField::zeros(gt.width(), gt.height(), false);
            for (int y = 0; y < gt.height(); ++y)
              for (int x = 0; x < gt.width(); ++x)
                if (gt.valid(y, x) && pred.valid(y, x)) {
                  err.valid(y, x) = true;
                  err.u(y, x) = std::clamp(pred.u(y, x) - gt.u(y, x), -500.0f, 500.0f);
                  err.v(y, x) = std::clamp(pred.v(y, x) - gt.v(y, x), -500.0f, 500.0f);
                }
            fs::create_directories(out / "maps");
            io::save_bytes(out / "maps" / (name + "_" + variant + ".png"),
                           io::write_kitti_png(err));
          }
        } catch (const Error& e) {
          row.note = "error: " + sanitize(e.what());
          failures.fetch_add(1);
        }
        rows[i].push_back(row);
      }
    } catch (const std::exception& e) {
      EvalRow row;
      row.variant = "load";
      row.note = "error: " + sanitize(e.what());
      rows[i].push_back(row);
      failures.fetch_add(1);
    }
  });

  // Wide paired report plus a canonical per-variant CSV.
  std::string csv;
  for (const auto& line : opt.provenance("eval")) csv += "# " + line + "\n";
  csv += "image";
  for (const auto& v : kVariants) csv += ",epe_" + v + ",fl_" + v + ",density_" + v;
  csv += "\n";
  struct VariantRows {
    std::vector<io::ReportRow> rows;
    std::vector<std::int64_t> joints;
  };
  std::map<std::string, VariantRows> per_variant;
  for (std::size_t i = 0; i < names.size(); ++i) {
    csv += names[i];
    for (const auto& v : kVariants) {
      const EvalRow* found = nullptr;
      for (const auto& row : rows[i])
        if (row.variant == v) found = &row;
      if (found && found->ok) {
        csv += ',' + format_number(found->epe) + ',' + format_number(found->fl) + ',' +
               format_number(found->density);
        per_variant[v].rows.push_back({names[i], found->epe, found->fl, found->density});
        per_variant[v].joints.push_back(found->joint);
      } else {
        csv += ",,,";
      }
    }
    csv += "\n";
  }
  for (const auto& [variant, entry] : per_variant) {
    io::ReportRow agg{"aggregate", 0.0, 0.0, 0.0};
    if (pooled) {
      // Per-pixel pooling: weight each image by its evaluated pixel count.
      double weight_sum = 0.0;
      for (std::size_t i = 0; i < entry.rows.size(); ++i) {
        const double w = static_cast<double>(entry.joints[i]);
        agg.epe += entry.rows[i].epe * w;
        agg.fl += entry.rows[i].fl * w;
        agg.density += entry.rows[i].density * w;
        weight_sum += w;
      }
      agg.epe /= weight_sum;
      agg.fl /= weight_sum;
      agg.density /= weight_sum;
    } else {
      for (const auto& row : entry.rows) {
        agg.epe += row.epe;
        agg.fl += row.fl;
        agg.density += row.density;
      }
      const double n = static_cast<double>(entry.rows.size());
      agg.epe /= n;
      agg.fl /= n;
      agg.density /= n;
    }
    auto with_agg = entry.rows;
    with_agg.push_back(agg);
    io::save_text(out / ("report_" + variant + ".csv"),
                  io::write_report_csv(with_agg, opt.provenance("eval")));
    csv += "aggregate_" + variant + ',' + format_number(agg.epe) + ',' + format_number(agg.fl) +
           ',' + format_number(agg.density) + "\n";
  }
  io::save_text(out / "report.csv", csv);

  if (names.empty()) std::fprintf(stderr, "eval: no data\n");
  std::printf("eval: processed %zu scene(s), %d failure(s)\n", names.size(), failures.load());
  return failures.load() == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sensor-guided optical flow toolkit: synthetic scenes, flow hints from "
               "depth + geometry, guided estimation and KITTI-style evaluation"};
  app.require_subcommand(1);

  CommonOptions opt;
  CommonCli gen_cli, hints_cli, flow_cli, eval_cli;

  std::string preset = "static-suite";
  std::string spec_file;
  int count = 10;
  std::string gen_out = "scenes";
  auto* gen = app.add_subcommand("generate", "Generate synthetic scenes with ground truth");
  gen->add_option("--preset", preset, "static-suite or dynamic-suite");
  gen->add_option("--spec", spec_file, "JSON scene spec file (overrides --preset)");
  gen->add_option("--count", count, "Number of scenes");
  gen->add_option("--out", gen_out, "Output dataset directory");
  add_common_options(gen, opt, gen_cli);

  std::string hints_scenes = "scenes", hints_out = "hints";
  bool use_dataset_pose = false;
  auto* hints = app.add_subcommand("hints", "Produce ego, estimator and fused flow hints");
  hints->add_option("--scenes", hints_scenes, "Dataset directory");
  hints->add_option("--out", hints_out, "Output hints directory");
  hints->add_flag("--use-pose", use_dataset_pose, "Use pose.txt instead of PnP");
  add_common_options(hints, opt, hints_cli);

  std::string flow_scenes = "scenes", flow_hints, flow_out = "flows";
  auto* flow = app.add_subcommand("flow", "Run unguided and guided flow estimation");
  flow->add_option("--scenes", flow_scenes, "Dataset directory");
  flow->add_option("--hints", flow_hints, "Hints directory (enables sensor_guided)");
  flow->add_option("--out", flow_out, "Output flow directory");
  add_common_options(flow, opt, flow_cli);

  std::string eval_scenes = "scenes", eval_flows = "flows", eval_out = "report";
  bool error_maps = false;
  bool pooled = false;
  auto* eval = app.add_subcommand("eval", "Evaluate flow outputs against ground truth");
  eval->add_option("--scenes", eval_scenes, "Dataset directory");
  eval->add_option("--flows", eval_flows, "Flow directory from the flow command");
  eval->add_option("--out", eval_out, "Report directory");
  eval->add_flag("--error-maps", error_maps, "Write per-pixel error maps as KITTI PNGs");
  eval->add_flag("--pooled", pooled, "Aggregate per-pixel instead of per-image means");
  add_common_options(eval, opt, eval_cli);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      apply_config_file(gen_cli);
      return cmd_generate(preset, spec_file, count, opt, gen_out);
    }
    if (hints->parsed()) {
      apply_config_file(hints_cli);
      return cmd_hints(hints_scenes, hints_out, use_dataset_pose, opt);
    }
    if (flow->parsed()) {
      apply_config_file(flow_cli);
      return cmd_flow(flow_scenes, flow_hints, flow_out, opt);
    }
    if (eval->parsed()) {
      apply_config_file(eval_cli);
      return cmd_eval(eval_scenes, eval_flows, eval_out, error_maps, pooled, opt);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
