#include "guidedflow/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "guidedflow/io.hpp"
#include "guidedflow/random.hpp"

namespace guidedflow {

namespace {

double hash01(std::uint64_t seed, std::int64_t x, std::int64_t y) {
  const std::uint64_t h =
      splitmix64(splitmix64(seed ^ static_cast<std::uint64_t>(x)) ^ static_cast<std::uint64_t>(y));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// One lattice octave with Hermite-interpolated corner hashes.
double lattice_noise(double x, double y, std::uint64_t seed) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx);
  const auto iy = static_cast<std::int64_t>(fy);
  const double tx = smoothstep(x - fx);
  const double ty = smoothstep(y - fy);
  const double v00 = hash01(seed, ix, iy);
  const double v01 = hash01(seed, ix + 1, iy);
  const double v10 = hash01(seed, ix, iy + 1);
  const double v11 = hash01(seed, ix + 1, iy + 1);
  const double a = v00 + (v01 - v00) * tx;
  const double b = v10 + (v11 - v10) * tx;
  return a + (b - a) * ty;
}

struct ScenePlane {
  Eigen::Vector3d n;  // n . P = d in frame-0 camera coordinates
  double d;
};

}  // namespace

double value_noise(double x, double y, std::uint64_t seed) {
  // Band-limited: cells coarse enough that bilinear image resampling stays
  // well under the photometric tolerance, fine enough to match on.
  constexpr double cells[3] = {24.0, 12.0, 6.0};
  constexpr double amps[3] = {0.5, 0.3, 0.2};
  double v = 0.0;
  for (int o = 0; o < 3; ++o)
    v += amps[o] * lattice_noise(x / cells[o], y / cells[o], seed + static_cast<std::uint64_t>(o));
  return std::clamp(v, 0.0, 1.0);
}

namespace {

Eigen::Matrix3d intrinsic_matrix(const CameraIntrinsics& K) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  m(0, 0) = K.fx;
  m(1, 1) = K.fy;
  m(0, 2) = K.cx;
  m(1, 2) = K.cy;
  m(2, 2) = 1.0;
  return m;
}

Eigen::Matrix3d inverse_intrinsics(const CameraIntrinsics& K) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  m(0, 0) = 1.0 / K.fx;
  m(1, 1) = 1.0 / K.fy;
  m(0, 2) = -K.cx / K.fx;
  m(1, 2) = -K.cy / K.fy;
  m(2, 2) = 1.0;
  return m;
}

struct SceneGeometry {
  std::vector<ScenePlane> planes;        // frame 0
  std::vector<ScenePlane> planes1;       // same planes in frame-1 coordinates
  std::vector<Eigen::Matrix3d> homog;    // pixel transfer frame 0 -> 1 per plane
  std::vector<Eigen::Matrix3d> homog_inv;
  bool identity = false;
};

SceneGeometry build_geometry(const SceneSpec& spec) {
  SceneGeometry g;
  if (spec.layout == BackgroundLayout::GroundWall) {
    g.planes.push_back({{0.0, 1.0, 0.0}, spec.ground_height});
    g.planes.push_back({{0.0, 0.0, 1.0}, spec.plane_depth});
  } else {
    g.planes.push_back({{0.0, 0.0, 1.0}, spec.plane_depth});
  }

  const Eigen::Matrix3d& r = spec.pose.rotation;
  const Eigen::Vector3d& t = spec.pose.translation;
  g.identity = r == Eigen::Matrix3d::Identity() && t == Eigen::Vector3d::Zero();

  const Eigen::Matrix3d km = intrinsic_matrix(spec.K);
  const Eigen::Matrix3d kinv = inverse_intrinsics(spec.K);
  for (const ScenePlane& plane : g.planes) {
    const Eigen::Vector3d n1 = r * plane.n;
    g.planes1.push_back({n1, plane.d + n1.dot(t)});
    if (g.identity) {
      g.homog.push_back(Eigen::Matrix3d::Identity());
      g.homog_inv.push_back(Eigen::Matrix3d::Identity());
    } else {
      const Eigen::Matrix3d h = km * (r + t * plane.n.transpose() / plane.d) * kinv;
      g.homog.push_back(h);
      g.homog_inv.push_back(h.inverse());
    }
  }
  return g;
}

// Nearest positive plane intersection along the pixel ray; -1 when none.
int select_plane(const std::vector<ScenePlane>& planes, const Eigen::Vector3d& ray, double& z) {
  int best = -1;
  z = 0.0;
  for (std::size_t i = 0; i < planes.size(); ++i) {
    const double denom = planes[i].n.dot(ray);
    if (denom <= 1e-12) continue;
    const double zi = planes[i].d / denom;
    if (zi > 0.0 && (best < 0 || zi < z)) {
      best = static_cast<int>(i);
      z = zi;
    }
  }
  return best;
}

bool in_box(double qx, double qy, const ObjectSpec& obj, double shift_x, double shift_y) {
  return qx >= obj.x + shift_x && qx < obj.x + obj.w + shift_x && qy >= obj.y + shift_y &&
         qy < obj.y + obj.h + shift_y;
}

// Topmost object covering the point, or -1.
int object_at(const std::vector<ObjectSpec>& objects, double qx, double qy, bool frame1) {
  int hit = -1;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const double sx = frame1 ? objects[i].mx : 0.0;
    const double sy = frame1 ? objects[i].my : 0.0;
    if (in_box(qx, qy, objects[i], sx, sy)) hit = static_cast<int>(i);
  }
  return hit;
}

void validate_spec(const SceneSpec& spec) {
  if (spec.width < 8 || spec.height < 8) throw ConfigError("scene: size too small");
  spec.K.validate();
  if (!(spec.plane_depth > 0.0)) throw ConfigError("scene: plane depth must be > 0");
  if (spec.layout == BackgroundLayout::GroundWall && !(spec.ground_height > 0.0))
    throw ConfigError("scene: ground height must be > 0");
  if (!(spec.depth_sparsity > 0.0) || spec.depth_sparsity > 1.0)
    throw ConfigError("scene: depth sparsity must be in (0, 1]");
  if (spec.depth_noise < 0.0) throw ConfigError("scene: depth noise must be >= 0");
  for (const ObjectSpec& o : spec.objects) {
    if (o.w < 4 || o.h < 4 || !(o.depth > 0.0)) throw ConfigError("scene: degenerate object");
    if (o.x < 0 || o.y < 0 || o.x + o.w > spec.width || o.y + o.h > spec.height)
      throw ConfigError("scene: object outside frame 0");
    if (o.x + o.mx < 0.0 || o.x + o.w + o.mx > spec.width || o.y + o.my < 0.0 ||
        o.y + o.h + o.my > spec.height)
      throw ConfigError("scene: object outside frame 1");
  }
}

bool depth_sample_on(const SceneSpec& spec, int x, int y) {
  if (spec.depth_sampling == DepthSampling::Uniform)
    return hash01(spec.sensor_seed, x, y) < spec.depth_sparsity;
  // LIDAR-like scanlines: every 4th row, strided within the row.
  constexpr int row_stride = 4;
  const int col_stride =
      std::max(1, static_cast<int>(std::lround(1.0 / (row_stride * spec.depth_sparsity))));
  const int row_phase = static_cast<int>(splitmix64(spec.sensor_seed) % row_stride);
  if (y % row_stride != row_phase) return false;
  const int col_phase = static_cast<int>(splitmix64(spec.sensor_seed ^ static_cast<std::uint64_t>(y)) %
                                         static_cast<std::uint64_t>(col_stride));
  return x % col_stride == col_phase;
}

DepthMap sparsify(const DepthMap& exact, const SceneSpec& spec, std::uint64_t noise_salt) {
  DepthMap out = DepthMap::invalid(exact.width(), exact.height());
  for (int y = 0; y < exact.height(); ++y)
    for (int x = 0; x < exact.width(); ++x) {
      if (!exact.valid(y, x) || !depth_sample_on(spec, x, y)) continue;
      const double jitter =
          spec.depth_noise * (2.0 * hash01(spec.sensor_seed + noise_salt, x, y) - 1.0);
      const double z = exact.z(y, x) * (1.0 + jitter);
      if (z > 0.0) {
        out.z(y, x) = z;
        out.valid(y, x) = true;
      }
    }
  return out;
}

}  // namespace

Scene make_scene(const SceneSpec& spec, const std::string& name) {
  validate_spec(spec);
  const int w = spec.width;
  const int h = spec.height;
  const SceneGeometry geom = build_geometry(spec);

  Scene scene;
  scene.name = name;
  scene.K = spec.K;
  scene.pose = spec.pose;
  scene.i0 = ImageGray::constant(w, h, 0.0f);
  scene.i1 = ImageGray::constant(w, h, 0.0f);
  scene.gt = FlowField::zeros(w, h, true);
  scene.gt_u = PlaneD::Zero(h, w);
  scene.gt_v = PlaneD::Zero(h, w);
  scene.occluded = PlaneB::Constant(h, w, false);
  scene.d0_exact = DepthMap::invalid(w, h);
  scene.d1_exact = DepthMap::invalid(w, h);
  scene.seg = SegmentationMask::background(w, h);

  // Frame-0 pass: per-pixel surface, depth, analytic flow, image.
  PlaneI surface0 = PlaneI::Constant(h, w, -1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int obj = object_at(spec.objects, x, y, false);
      if (obj >= 0) {
        const ObjectSpec& o = spec.objects[static_cast<std::size_t>(obj)];
        surface0(y, x) = obj;
        scene.seg.id(y, x) = static_cast<std::uint16_t>(obj + 1);
        scene.gt_u(y, x) = o.mx;
        scene.gt_v(y, x) = o.my;
        scene.d0_exact.z(y, x) = o.depth;
        scene.d0_exact.valid(y, x) = true;
        scene.i0.intensity(y, x) =
            static_cast<float>(value_noise(x - o.x, y - o.y, o.texture_seed));
        continue;
      }

      const Eigen::Vector3d ray((x - spec.K.cx) / spec.K.fx, (y - spec.K.cy) / spec.K.fy, 1.0);
      double z0 = 0.0;
      const int plane = select_plane(geom.planes, ray, z0);
      if (plane < 0) {
        scene.gt.valid(y, x) = false;
        continue;
      }
      surface0(y, x) = -1 - plane;
      scene.d0_exact.z(y, x) = z0;
      scene.d0_exact.valid(y, x) = true;
      scene.i0.intensity(y, x) = static_cast<float>(value_noise(x, y, spec.texture_seed));

      const Eigen::Vector3d q = geom.homog[static_cast<std::size_t>(plane)] *
                                Eigen::Vector3d(static_cast<double>(x), static_cast<double>(y), 1.0);
      if (!(q.z() > 1e-12)) {
        scene.gt.valid(y, x) = false;
        continue;
      }
      scene.gt_u(y, x) = q.x() / q.z() - x;
      scene.gt_v(y, x) = q.y() / q.z() - y;
    }
  }

  // Frame-1 pass: image and exact depth.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int obj = object_at(spec.objects, x, y, true);
      if (obj >= 0) {
        const ObjectSpec& o = spec.objects[static_cast<std::size_t>(obj)];
        scene.d1_exact.z(y, x) = o.depth;
        scene.d1_exact.valid(y, x) = true;
        scene.i1.intensity(y, x) = static_cast<float>(
            value_noise(x - o.x - o.mx, y - o.y - o.my, o.texture_seed));
        continue;
      }
      const Eigen::Vector3d ray((x - spec.K.cx) / spec.K.fx, (y - spec.K.cy) / spec.K.fy, 1.0);
      double z1 = 0.0;
      const int plane = select_plane(geom.planes1, ray, z1);
      if (plane < 0) continue;
      scene.d1_exact.z(y, x) = z1;
      scene.d1_exact.valid(y, x) = true;
      const Eigen::Vector3d p = geom.homog_inv[static_cast<std::size_t>(plane)] *
                                Eigen::Vector3d(static_cast<double>(x), static_cast<double>(y), 1.0);
      if (p.z() > 1e-12)
        scene.i1.intensity(y, x) =
            static_cast<float>(value_noise(p.x() / p.z(), p.y() / p.z(), spec.texture_seed));
    }
  }

  // Occlusion: the surface a pixel maps to in frame 1 differs from its own.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!scene.gt.valid(y, x)) continue;
      const double qx = x + scene.gt_u(y, x);
      const double qy = y + scene.gt_v(y, x);
      if (qx < 0.0 || qy < 0.0 || qx > w - 1.0 || qy > h - 1.0) continue;
      int surface1;
      const int obj = object_at(spec.objects, qx, qy, true);
      if (obj >= 0) {
        surface1 = obj;
      } else {
        const Eigen::Vector3d ray((qx - spec.K.cx) / spec.K.fx, (qy - spec.K.cy) / spec.K.fy, 1.0);
        double z1 = 0.0;
        const int plane = select_plane(geom.planes1, ray, z1);
        surface1 = plane < 0 ? -9 : -1 - plane;
      }
      if (surface1 != surface0(y, x)) scene.occluded(y, x) = true;
    }
  }

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (scene.gt.valid(y, x)) {
        scene.gt.u(y, x) = static_cast<float>(scene.gt_u(y, x));
        scene.gt.v(y, x) = static_cast<float>(scene.gt_v(y, x));
      }
  scene.gt = canonicalize(scene.gt);

  scene.d0 = sparsify(scene.d0_exact, spec, 0x51);
  scene.d1 = sparsify(scene.d1_exact, spec, 0x52);
  return scene;
}

std::vector<SceneSpec> preset_scenes(const std::string& preset, int count, std::uint64_t seed) {
  if (count < 0) throw ConfigError("preset_scenes: count must be >= 0");
  const bool dynamic = preset == "dynamic-suite";
  if (!dynamic && preset != "static-suite")
    throw ConfigError("preset_scenes: unknown preset '" + preset + "'");

  constexpr double kDeg = 3.14159265358979323846 / 180.0;
  std::vector<SceneSpec> specs;
  specs.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    std::mt19937_64 rng(splitmix64(seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(i + 1))));
    SceneSpec spec;
    spec.width = 256;
    spec.height = 256;
    spec.layout = BackgroundLayout::GroundWall;
    spec.texture_seed = rng();
    spec.sensor_seed = rng();

    if (!dynamic) {
      spec.K.fx = uniform_real(rng, 180.0, 220.0);
      spec.K.fy = spec.K.fx * uniform_real(rng, 0.99, 1.01);
      spec.K.cx = 127.5;
      spec.K.cy = 127.5;
      spec.ground_height = uniform_real(rng, 1.3, 1.7);
      spec.plane_depth = uniform_real(rng, 3.5, 5.0);
      const Eigen::Vector3d omega(uniform_real(rng, -0.8, 0.8) * kDeg,
                                  uniform_real(rng, -0.8, 0.8) * kDeg,
                                  uniform_real(rng, -0.8, 0.8) * kDeg);
      const Eigen::Vector3d t(uniform_real(rng, -0.15, 0.15), uniform_real(rng, -0.04, 0.04),
                              uniform_real(rng, -0.05, 0.05));
      spec.pose = RigidPose(axis_angle_rotation(omega), t);
    } else {
      spec.K.fx = uniform_real(rng, 190.0, 210.0);
      spec.K.fy = spec.K.fx * uniform_real(rng, 0.995, 1.005);
      spec.K.cx = 127.5;
      spec.K.cy = 127.5;
      spec.ground_height = uniform_real(rng, 1.35, 1.6);
      spec.plane_depth = uniform_real(rng, 3.2, 3.6);
      const Eigen::Vector3d omega(uniform_real(rng, -0.3, 0.3) * kDeg,
                                  uniform_real(rng, -0.5, 0.5) * kDeg,
                                  uniform_real(rng, -0.3, 0.3) * kDeg);
      const double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
      const Eigen::Vector3d t(sign * uniform_real(rng, 0.78, 0.92),
                              uniform_real(rng, -0.05, 0.05), uniform_real(rng, -0.03, 0.03));
      spec.pose = RigidPose(axis_angle_rotation(omega), t);

      auto uint_in = [&rng](int lo, int hi) {
        return lo + static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(hi - lo + 1)));
      };
      ObjectSpec near_obj;
      near_obj.w = uint_in(30, 44);
      near_obj.h = uint_in(30, 44);
      near_obj.x = uint_in(20, 90);
      near_obj.y = uint_in(120, 180);
      near_obj.depth = uniform_real(rng, 1.3, 1.7);
      near_obj.mx = (uniform01(rng) < 0.5 ? -1.0 : 1.0) * uniform_real(rng, 4.0, 8.0);
      near_obj.my = (uniform01(rng) < 0.5 ? -1.0 : 1.0) * uniform_real(rng, 3.0, 6.0);
      near_obj.texture_seed = rng();

      ObjectSpec deep_obj;
      deep_obj.w = uint_in(36, 52);
      deep_obj.h = uint_in(36, 52);
      deep_obj.x = uint_in(140, 185);
      deep_obj.y = uint_in(100, 180);
      deep_obj.depth = spec.plane_depth * uniform_real(rng, 0.9, 1.1);
      deep_obj.mx = (uniform01(rng) < 0.5 ? -1.0 : 1.0) * uniform_real(rng, 4.0, 8.0);
      deep_obj.my = (uniform01(rng) < 0.5 ? -1.0 : 1.0) * uniform_real(rng, 3.0, 6.0);
      deep_obj.texture_seed = rng();

      spec.objects = {near_obj, deep_obj};
    }
    specs.push_back(std::move(spec));
  }
  return specs;
}

void write_scene(const std::filesystem::path& dir, const Scene& scene) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IOError("cannot create " + dir.string());

  io::save_bytes(dir / "image0.png", io::write_image(scene.i0));
  io::save_bytes(dir / "image1.png", io::write_image(scene.i1));
  io::save_bytes(dir / "flow_gt.flo", io::write_flo(scene.gt));
  io::save_bytes(dir / "flow_gt.png", io::write_kitti_png(scene.gt));
  io::save_bytes(dir / "depth0.png", io::write_depth(scene.d0));
  io::save_bytes(dir / "depth1.png", io::write_depth(scene.d1));
  io::save_bytes(dir / "mask.png", io::write_mask(scene.seg));

  SegmentationMask occ = SegmentationMask::background(static_cast<int>(scene.occluded.cols()),
                                                      static_cast<int>(scene.occluded.rows()));
  for (int y = 0; y < occ.height(); ++y)
    for (int x = 0; x < occ.width(); ++x) occ.id(y, x) = scene.occluded(y, x) ? 1 : 0;
  io::save_bytes(dir / "occlusion.png", io::write_mask(occ));

  io::save_bytes(dir / "intrinsics.txt", io::write_intrinsics(scene.K));
  io::save_bytes(dir / "pose.txt", io::write_pose(scene.pose));
}

LoadedScene load_scene(const std::filesystem::path& dir) {
  LoadedScene scene;
  scene.i0 = io::read_image(io::load_bytes(dir / "image0.png"));
  scene.i1 = io::read_image(io::load_bytes(dir / "image1.png"));
  scene.gt = io::read_flo(io::load_bytes(dir / "flow_gt.flo"));

  const auto optional_read = [&dir](const char* file, auto reader, auto& slot) {
    const auto path = dir / file;
    if (std::filesystem::exists(path)) slot = reader(io::load_bytes(path));
  };
  optional_read("depth0.png", io::read_depth, scene.d0);
  optional_read("depth1.png", io::read_depth, scene.d1);
  optional_read("mask.png", io::read_mask, scene.seg);
  optional_read("intrinsics.txt", io::read_intrinsics, scene.K);
  optional_read("pose.txt", io::read_pose, scene.pose);
  return scene;
}

void write_manifest(const std::filesystem::path& dataset, const std::vector<std::string>& names) {
  std::string text;
  for (const auto& name : names) text += name + "\n";
  io::save_text(dataset / "manifest.txt", text);
}

std::vector<std::string> read_manifest(const std::filesystem::path& dataset) {
  const auto path = dataset / "manifest.txt";
  std::vector<std::string> names;
  if (!std::filesystem::exists(path)) return names;
  std::ifstream in(path);
  if (!in) throw IOError("cannot open " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) names.push_back(line);
  }
  return names;
}

}  // namespace guidedflow
