#include "visfuse/synthscene.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include <Eigen/Geometry>

#include "visfuse/error.hpp"
#include "visfuse/image_io.hpp"
#include "visfuse/sparse_grid.hpp"

namespace visfuse {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double box_sdf(const Box& box, const Vec3& p) {
  const Vec3 q = (box.rotation * (p - box.center)).cwiseAbs() - box.half_extents;
  const double outside = q.cwiseMax(0.0).norm();
  const double inside = std::min(q.maxCoeff(), 0.0);
  const double d = outside + inside;
  return box.inside_out ? -d : d;
}

double capsule_sdf(const Capsule& c, const Vec3& p) {
  const Vec3 pa = p - c.a;
  const Vec3 ba = c.b - c.a;
  const double denom = ba.squaredNorm();
  const double h = denom > 0.0 ? std::clamp(pa.dot(ba) / denom, 0.0, 1.0) : 0.0;
  return (pa - ba * h).norm() - c.radius;
}

// Fixed plane-wave codes for the albedo channels: direction * frequency and
// phase, drawn once from a SplitMix64 stream so every build agrees.
struct Wave {
  Vec3 k;
  double phase;
};

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double unit_uniform(std::uint64_t& state) {
  return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
}

const std::array<Wave, 64>& albedo_waves() {
  static const std::array<Wave, 64> waves = [] {
    std::array<Wave, 64> w{};
    std::uint64_t state = 0x5EEDF00DULL;
    for (Wave& wave : w) {
      const double z = 2.0 * unit_uniform(state) - 1.0;
      const double phi = 2.0 * std::numbers::pi * unit_uniform(state);
      const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
      const Vec3 dir(s * std::cos(phi), s * std::sin(phi), z);
      // Wavelengths between 0.3 m and 1.0 m.
      const double wavelength = 0.3 + 0.7 * unit_uniform(state);
      wave.k = dir * (2.0 * std::numbers::pi / wavelength);
      wave.phase = 2.0 * std::numbers::pi * unit_uniform(state);
    }
    return w;
  }();
  return waves;
}

}  // namespace

double shape_sdf(const Shape& shape, const Vec3& p) {
  return std::visit(
      Overloaded{
          [&](const Sphere& s) { return (p - s.center).norm() - s.radius; },
          [&](const Box& b) { return box_sdf(b, p); },
          [&](const Capsule& c) { return capsule_sdf(c, p); },
          [&](const Plane& pl) { return pl.normal.normalized().dot(p) - pl.offset; },
      },
      shape);
}

GroundTruthScene::GroundTruthScene(std::vector<Primitive> primitives)
    : primitives_(std::move(primitives)) {}

void GroundTruthScene::add(Shape shape, std::string tag) {
  primitives_.push_back({std::move(shape), std::move(tag)});
}

double GroundTruthScene::sdf(const Vec3& p) const {
  double d = std::numeric_limits<double>::infinity();
  for (const Primitive& prim : primitives_) d = std::min(d, shape_sdf(prim.shape, p));
  return d;
}

std::size_t GroundTruthScene::nearest(const Vec3& p) const {
  std::size_t best = 0;
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < primitives_.size(); ++i) {
    const double di = shape_sdf(primitives_[i].shape, p);
    if (di < d) {
      d = di;
      best = i;
    }
  }
  return best;
}

std::optional<std::size_t> GroundTruthScene::find_tag(const std::string& tag) const {
  for (std::size_t i = 0; i < primitives_.size(); ++i) {
    if (primitives_[i].tag == tag) return i;
  }
  return std::nullopt;
}

Vec3 GroundTruthScene::normal(const Vec3& p) const {
  constexpr double h = 1e-5;
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 e = Vec3::Zero();
    e[a] = h;
    g[a] = sdf(p + e) - sdf(p - e);
  }
  const double n = g.norm();
  return n > 0.0 ? Vec3(g / n) : Vec3(Vec3::UnitZ());
}

std::optional<double> trace_first_hit(const GroundTruthScene& scene, const Vec3& origin,
                                      const Vec3& dir, double t_max, double tolerance) {
  constexpr int kMaxSteps = 2048;
  double t = 0.0;
  for (int step = 0; step < kMaxSteps && t <= t_max; ++step) {
    const double d = scene.sdf(origin + t * dir);
    if (d < tolerance) return t;
    t += d;
  }
  return std::nullopt;
}

std::vector<float> render_depth(const GroundTruthScene& scene, const CameraIntrinsics& intrinsics,
                                const CameraPose& pose, double d_max) {
  intrinsics.validate();
  std::vector<float> depth(static_cast<std::size_t>(intrinsics.width) * intrinsics.height, 0.0f);
  const Vec3 eye = pose.camera_center();
  for (int y = 0; y < intrinsics.height; ++y) {
    for (int x = 0; x < intrinsics.width; ++x) {
      const auto [dir, per_depth] = pixel_ray(intrinsics, pose, {x, y});
      const auto hit = trace_first_hit(scene, eye, dir, d_max * per_depth);
      if (hit && *hit / per_depth <= d_max) {
        depth[static_cast<std::size_t>(y) * intrinsics.width + x] =
            static_cast<float>(*hit / per_depth);
      }
    }
  }
  return depth;
}

Tsdf gt_tsdf(const GroundTruthScene& scene, std::span<const Vec3> centers, double lambda) {
  if (!(lambda > 0.0)) throw InvalidInput("gt_tsdf: truncation must be positive");
  Tsdf out;
  out.tsdf.resize(centers.size());
  out.occupied.resize(centers.size());
  for (std::size_t d = 0; d < centers.size(); ++d) {
    const double s = scene.sdf(centers[d]);
    out.tsdf[d] = static_cast<float>(std::clamp(s / lambda, -1.0, 1.0));
    out.occupied[d] = std::abs(s) < lambda ? 1 : 0;
  }
  return out;
}

void surface_descriptor(const Vec3* point, const Vec3& normal, std::span<float> out) {
  const int channels = static_cast<int>(out.size());
  if (channels < 3) throw InvalidInput("surface_descriptor: need at least 3 channels");
  std::fill(out.begin(), out.end(), 0.0f);
  if (point == nullptr) {
    out[0] = 1.0f;
    return;
  }
  const int normal_channels = std::min(3, channels - 2);
  for (int i = 0; i < normal_channels; ++i) out[1 + i] = static_cast<float>(0.5 * normal[i]);
  const auto& waves = albedo_waves();
  for (int c = 1 + normal_channels, w = 0; c < channels; ++c, ++w) {
    const Wave& wave = waves[static_cast<std::size_t>(w) % waves.size()];
    out[c] = static_cast<float>(std::sin(wave.k.dot(*point) + wave.phase));
  }
}

FeatureMap synth_features(const GroundTruthScene& scene, const CameraIntrinsics& intrinsics,
                          const CameraPose& pose, int channels, double d_max) {
  if (channels < 3) throw InvalidInput("synth_features: need at least 3 channels");
  intrinsics.validate();
  FeatureMap map(intrinsics.height, intrinsics.width, channels);
  const Vec3 eye = pose.camera_center();
  for (int y = 0; y < intrinsics.height; ++y) {
    for (int x = 0; x < intrinsics.width; ++x) {
      const auto [dir, per_depth] = pixel_ray(intrinsics, pose, {x, y});
      const auto hit = trace_first_hit(scene, eye, dir, d_max * per_depth);
      if (hit) {
        const Vec3 p = eye + *hit * dir;
        const Vec3 n = scene.normal(p);
        surface_descriptor(&p, n, map.at(y, x));
      } else {
        surface_descriptor(nullptr, Vec3::Zero(), map.at(y, x));
      }
    }
  }
  return map;
}

std::vector<std::uint8_t> render_color(const GroundTruthScene& scene,
                                       const CameraIntrinsics& intrinsics,
                                       const CameraPose& pose, double d_max) {
  intrinsics.validate();
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(intrinsics.width) * intrinsics.height * 3, 0);
  const Vec3 eye = pose.camera_center();
  const auto& waves = albedo_waves();
  for (int y = 0; y < intrinsics.height; ++y) {
    for (int x = 0; x < intrinsics.width; ++x) {
      const auto [dir, per_depth] = pixel_ray(intrinsics, pose, {x, y});
      const auto hit = trace_first_hit(scene, eye, dir, d_max * per_depth);
      if (!hit) continue;
      const Vec3 p = eye + *hit * dir;
      const double shade = std::max(0.2, std::abs(scene.normal(p).dot(dir)));
      auto* px = &rgb[(static_cast<std::size_t>(y) * intrinsics.width + x) * 3];
      for (int c = 0; c < 3; ++c) {
        const Wave& w = waves[static_cast<std::size_t>(c)];
        const double albedo = 0.5 + 0.4 * std::sin(w.k.dot(p) + w.phase);
        px[c] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(albedo * shade, 0.0, 1.0)));
      }
    }
  }
  return rgb;
}

std::vector<CameraPose> CameraTrajectory::poses() const {
  if (count < 1) throw InvalidInput("trajectory: count must be positive");
  std::vector<CameraPose> out;
  out.reserve(static_cast<std::size_t>(count));
  constexpr double kDeg = std::numbers::pi / 180.0;
  for (int i = 0; i < count; ++i) {
    Vec3 eye;
    Vec3 look = target;
    switch (kind) {
      case Kind::kOrbit: {
        const double theta = (start_angle_deg + laps * 360.0 * i / count) * kDeg;
        eye = Vec3(center.x() + radius * std::cos(theta), center.y() + radius * std::sin(theta), height);
        if (outward) {
          const double tilt = tilt_deg * kDeg;
          look = eye + Vec3(std::cos(theta) * std::cos(tilt), std::sin(theta) * std::cos(tilt),
                            -std::sin(tilt));
        }
        break;
      }
      case Kind::kLine: {
        const double s = count > 1 ? static_cast<double>(i) / (count - 1) : 0.0;
        eye = start + (end - start) * s;
        break;
      }
      case Kind::kLemniscate: {
        const double s = 2.0 * std::numbers::pi * i / count;
        const double denom = 1.0 + std::sin(s) * std::sin(s);
        eye = Vec3(center.x() + radius * std::cos(s) / denom,
                   center.y() + radius * std::sin(s) * std::cos(s) / denom, height);
        break;
      }
    }
    out.push_back(CameraPose::look_at(eye, look, up));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scene file format

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

class Fields {
 public:
  Fields(std::istringstream& tokens, std::string where) : where_(std::move(where)) {
    std::string tok;
    while (tokens >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) fail("expected key=value, got '" + tok + "'");
      values_.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
    }
  }

  std::optional<std::string> get(const std::string& key) {
    for (auto& [k, v] : values_) {
      if (k == key) {
        used_.insert(k);
        return v;
      }
    }
    return std::nullopt;
  }
  std::string str(const std::string& key, const std::string& fallback) {
    return get(key).value_or(fallback);
  }
  double num(const std::string& key, std::optional<double> fallback = std::nullopt) {
    const auto v = get(key);
    if (!v) {
      if (fallback) return *fallback;
      fail("missing '" + key + "'");
    }
    try {
      std::size_t pos = 0;
      const double d = std::stod(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument(*v);
      return d;
    } catch (const std::exception&) {
      fail("bad number for '" + key + "'");
    }
  }
  Vec3 vec(const std::string& key, std::optional<Vec3> fallback = std::nullopt) {
    const auto v = get(key);
    if (!v) {
      if (fallback) return *fallback;
      fail("missing '" + key + "'");
    }
    Vec3 out;
    std::istringstream in(*v);
    std::string part;
    int i = 0;
    while (std::getline(in, part, ',')) {
      if (i >= 3) fail("'" + key + "' needs 3 components");
      try {
        out[i++] = std::stod(part);
      } catch (const std::exception&) {
        fail("bad vector for '" + key + "'");
      }
    }
    if (i != 3) fail("'" + key + "' needs 3 components");
    return out;
  }
  bool flag(const std::string& key, bool fallback) {
    const auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1") return true;
    if (*v == "false" || *v == "0") return false;
    fail("bad boolean for '" + key + "'");
  }
  void finish() {
    for (auto& [k, v] : values_) {
      if (!used_.count(k)) fail("unknown key '" + k + "'");
    }
  }
  [[noreturn]] void fail(const std::string& msg) const { throw InvalidInput(where_ + ": " + msg); }

 private:
  std::string where_;
  std::vector<std::pair<std::string, std::string>> values_;
  std::unordered_set<std::string> used_;
};

std::string fmt_vec(const Vec3& v) {
  std::ostringstream os;
  os << std::setprecision(17) << v.x() << ',' << v.y() << ',' << v.z();
  return os.str();
}

Mat3 rotation_from_degrees(const Vec3& deg) {
  constexpr double k = std::numbers::pi / 180.0;
  return (Eigen::AngleAxisd(deg.z() * k, Vec3::UnitZ()) * Eigen::AngleAxisd(deg.y() * k, Vec3::UnitY()) *
          Eigen::AngleAxisd(deg.x() * k, Vec3::UnitX()))
      .toRotationMatrix()
      .transpose();
}

}  // namespace

SceneDescription parse_scene(const std::string& text, const std::string& origin) {
  SceneDescription desc;
  bool have_camera = false;
  bool have_trajectory = false;
  std::istringstream lines(text);
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::istringstream tokens(line);
    std::string kind;
    tokens >> kind;
    Fields f(tokens, origin + ":" + std::to_string(lineno));
    if (kind == "name") {
      desc.name = f.str("value", desc.name);
    } else if (kind == "camera") {
      desc.intrinsics.width = static_cast<int>(f.num("width"));
      desc.intrinsics.height = static_cast<int>(f.num("height"));
      desc.intrinsics.fx = f.num("fx");
      desc.intrinsics.fy = f.num("fy", desc.intrinsics.fx);
      desc.intrinsics.cx = f.num("cx", (desc.intrinsics.width - 1) / 2.0);
      desc.intrinsics.cy = f.num("cy", (desc.intrinsics.height - 1) / 2.0);
      have_camera = true;
    } else if (kind == "sphere") {
      Sphere s{f.vec("center"), f.num("radius")};
      desc.scene.add(s, f.str("tag", ""));
    } else if (kind == "box") {
      Box b;
      b.center = f.vec("center");
      b.half_extents = f.vec("half_extents");
      b.rotation = rotation_from_degrees(f.vec("rotation_deg", Vec3::Zero()));
      b.inside_out = f.flag("inside_out", false);
      desc.scene.add(b, f.str("tag", ""));
    } else if (kind == "capsule") {
      Capsule c{f.vec("a"), f.vec("b"), f.num("radius")};
      desc.scene.add(c, f.str("tag", ""));
    } else if (kind == "plane") {
      Plane p{f.vec("normal").normalized(), f.num("offset")};
      desc.scene.add(p, f.str("tag", ""));
    } else if (kind == "trajectory") {
      CameraTrajectory& t = desc.trajectory;
      const std::string type = f.str("type", "orbit");
      if (type == "orbit") {
        t.kind = CameraTrajectory::Kind::kOrbit;
      } else if (type == "line") {
        t.kind = CameraTrajectory::Kind::kLine;
      } else if (type == "lemniscate") {
        t.kind = CameraTrajectory::Kind::kLemniscate;
      } else {
        f.fail("unknown trajectory type '" + type + "'");
      }
      t.count = static_cast<int>(f.num("count"));
      t.center = f.vec("center", Vec3::Zero());
      t.radius = f.num("radius", 1.0);
      t.height = f.num("height", 1.0);
      t.start_angle_deg = f.num("start_angle_deg", 0.0);
      t.laps = f.num("laps", 1.0);
      t.outward = f.flag("outward", false);
      t.tilt_deg = f.num("tilt_deg", 0.0);
      t.start = f.vec("start", Vec3::Zero());
      t.end = f.vec("end", Vec3::UnitX());
      t.target = f.vec("target", Vec3::Zero());
      t.up = f.vec("up", Vec3::UnitZ());
      have_trajectory = true;
    } else {
      f.fail("unknown entry '" + kind + "'");
    }
    f.finish();
  }
  if (!have_camera) throw InvalidInput(origin + ": missing camera line");
  if (!have_trajectory) throw InvalidInput(origin + ": missing trajectory line");
  if (desc.scene.empty()) throw InvalidInput(origin + ": scene has no primitives");
  desc.intrinsics.validate();
  return desc;
}

SceneDescription load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open scene file");
  std::stringstream buf;
  buf << in.rdbuf();
  SceneDescription desc = parse_scene(buf.str(), path.string());
  if (desc.name.empty()) desc.name = path.stem().string();
  return desc;
}

std::string format_scene(const SceneDescription& desc) {
  std::ostringstream os;
  os << std::setprecision(17);
  if (!desc.name.empty()) os << "name value=" << desc.name << '\n';
  const CameraIntrinsics& k = desc.intrinsics;
  os << "camera width=" << k.width << " height=" << k.height << " fx=" << k.fx << " fy=" << k.fy
     << " cx=" << k.cx << " cy=" << k.cy << '\n';
  for (const Primitive& prim : desc.scene.primitives()) {
    std::visit(Overloaded{
                   [&](const Sphere& s) {
                     os << "sphere center=" << fmt_vec(s.center) << " radius=" << s.radius;
                   },
                   [&](const Box& b) {
                     const Vec3 euler = b.rotation.transpose().eulerAngles(2, 1, 0) * (180.0 / std::numbers::pi);
                     os << "box center=" << fmt_vec(b.center) << " half_extents=" << fmt_vec(b.half_extents)
                        << " rotation_deg=" << fmt_vec(Vec3(euler[2], euler[1], euler[0]))
                        << " inside_out=" << (b.inside_out ? "true" : "false");
                   },
                   [&](const Capsule& c) {
                     os << "capsule a=" << fmt_vec(c.a) << " b=" << fmt_vec(c.b) << " radius=" << c.radius;
                   },
                   [&](const Plane& p) {
                     os << "plane normal=" << fmt_vec(p.normal) << " offset=" << p.offset;
                   },
               },
               prim.shape);
    if (!prim.tag.empty()) os << " tag=" << prim.tag;
    os << '\n';
  }
  const CameraTrajectory& t = desc.trajectory;
  const char* type = t.kind == CameraTrajectory::Kind::kOrbit  ? "orbit"
                     : t.kind == CameraTrajectory::Kind::kLine ? "line"
                                                               : "lemniscate";
  os << "trajectory type=" << type << " count=" << t.count << " center=" << fmt_vec(t.center)
     << " radius=" << t.radius << " height=" << t.height << " start_angle_deg=" << t.start_angle_deg
     << " laps=" << t.laps << " outward=" << (t.outward ? "true" : "false") << " tilt_deg=" << t.tilt_deg
     << " start=" << fmt_vec(t.start) << " end=" << fmt_vec(t.end) << " target=" << fmt_vec(t.target)
     << " up=" << fmt_vec(t.up) << '\n';
  return os.str();
}

SceneDescription canonical_scene(const std::string& name) {
  SceneDescription desc;
  desc.name = name;
  desc.intrinsics = {500.0, 500.0, 319.5, 239.5, 640, 480};
  if (name == "room") {
    // 4 m x 4 m x 2.5 m room with a sphere and a thin pole near a wall,
    // scanned by an outward-looking orbit around the room center.
    desc.scene.add(Box{Vec3(0.0, 0.0, 1.25), Vec3(2.0, 2.0, 1.25), Mat3::Identity(), true}, "room");
    desc.scene.add(Sphere{Vec3(1.3, 1.3, 0.6), 0.5}, "sphere");
    desc.scene.add(Capsule{Vec3(-1.45, 0.9, 0.1), Vec3(-1.45, 0.9, 2.4), 0.04}, "pole");
    CameraTrajectory& t = desc.trajectory;
    t.kind = CameraTrajectory::Kind::kOrbit;
    t.count = 40;
    t.radius = 0.7;
    t.height = 1.25;
    t.outward = true;
    t.tilt_deg = 15.0;
  } else if (name == "sphere-orbit") {
    desc.scene.add(Sphere{Vec3::Zero(), 0.5}, "sphere");
    CameraTrajectory& t = desc.trajectory;
    t.kind = CameraTrajectory::Kind::kOrbit;
    t.count = 9;
    t.radius = 2.0;
    t.height = 0.6;
    t.target = Vec3::Zero();
  } else if (name == "two-planes") {
    desc.scene.add(Plane{Vec3::UnitZ(), 0.0}, "floor");
    desc.scene.add(Plane{-Vec3::UnitZ(), -2.5}, "ceiling");
    CameraTrajectory& t = desc.trajectory;
    t.kind = CameraTrajectory::Kind::kLine;
    t.count = 30;
    t.start = Vec3(-1.5, 0.0, 1.25);
    t.end = Vec3(1.5, 0.0, 1.25);
    t.target = Vec3(4.0, 0.0, 0.5);
  } else {
    throw InvalidInput("unknown canonical scene '" + name + "'");
  }
  return desc;
}

void write_dataset(const std::filesystem::path& dir, const SceneDescription& desc, double d_max) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "depth");
  fs::create_directories(dir / "color");
  const std::vector<CameraPose> poses = desc.trajectory.poses();
  {
    std::ofstream k(dir / "intrinsics.txt");
    if (!k) throw IoError((dir / "intrinsics.txt").string(), "cannot write");
    k << std::setprecision(17) << desc.intrinsics.fx << ' ' << desc.intrinsics.fy << ' '
      << desc.intrinsics.cx << ' ' << desc.intrinsics.cy << ' ' << desc.intrinsics.width << ' '
      << desc.intrinsics.height << '\n';
  }
  std::ofstream posefile(dir / "poses.txt");
  if (!posefile) throw IoError((dir / "poses.txt").string(), "cannot write");
  posefile << std::setprecision(17);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const Mat4 c2w = poses[i].camera_to_world();
    posefile << i;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) posefile << ' ' << c2w(r, c);
    posefile << '\n';

    const std::vector<float> depth = render_depth(desc.scene, desc.intrinsics, poses[i], d_max);
    io::Image16 img{desc.intrinsics.width, desc.intrinsics.height, {}};
    img.pixels.reserve(depth.size());
    for (float d : depth) {
      img.pixels.push_back(static_cast<std::uint16_t>(std::clamp(std::lround(d * 1000.0), 0L, 65535L)));
    }
    io::write_png16(dir / "depth" / (std::to_string(i) + ".png"), img);
    io::write_png_rgb8(dir / "color" / (std::to_string(i) + ".png"),
                       {desc.intrinsics.width, desc.intrinsics.height,
                        render_color(desc.scene, desc.intrinsics, poses[i], d_max)});
  }
}

std::vector<Vec3> visible_surface_samples(const GroundTruthScene& scene,
                                          std::span<const Camera> cameras, double d_max,
                                          double spacing) {
  std::vector<Vec3> points;
  std::unordered_set<Index3, Index3Hash> seen;
  for (const Camera& cam : cameras) {
    const Vec3 eye = cam.pose.camera_center();
    for (int y = 0; y < cam.intrinsics.height; ++y) {
      for (int x = 0; x < cam.intrinsics.width; ++x) {
        const auto [dir, per_depth] = pixel_ray(cam.intrinsics, cam.pose, {x, y});
        const auto hit = trace_first_hit(scene, eye, dir, d_max * per_depth);
        if (!hit || *hit / per_depth > d_max) continue;
        const Vec3 p = eye + *hit * dir;
        const Index3 cell = (p / spacing).array().floor().cast<int>();
        if (seen.insert(cell).second) points.push_back(p);
      }
    }
  }
  return points;
}

}  // namespace visfuse
