#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "visfuse/geometry.hpp"

namespace visfuse {

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
};

/// Oriented box. `rotation` maps world directions into the box frame. With
/// inside_out the solid is everything outside the box, which models a room
/// seen from the inside.
struct Box {
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Ones();
  Mat3 rotation = Mat3::Identity();
  bool inside_out = false;
};

/// Segment a-b swept by a sphere.
struct Capsule {
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::UnitZ();
  double radius = 0.1;
};

/// Half-space normal . p <= offset is solid.
struct Plane {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;
};

using Shape = std::variant<Sphere, Box, Capsule, Plane>;

struct Primitive {
  Shape shape;
  std::string tag;
};

double shape_sdf(const Shape& shape, const Vec3& p);

/// Min-union of analytic primitives. Exact where primitives do not overlap.
class GroundTruthScene {
 public:
  GroundTruthScene() = default;
  explicit GroundTruthScene(std::vector<Primitive> primitives);

  void add(Shape shape, std::string tag = {});
  const std::vector<Primitive>& primitives() const { return primitives_; }
  bool empty() const { return primitives_.empty(); }

  double sdf(const Vec3& p) const;
  /// Index of the primitive attaining the minimum distance.
  std::size_t nearest(const Vec3& p) const;
  std::optional<std::size_t> find_tag(const std::string& tag) const;
  Vec3 normal(const Vec3& p) const;

 private:
  std::vector<Primitive> primitives_;
};

/// Signed distance in meters, positive in free space.
inline double scene_sdf(const GroundTruthScene& scene, const Vec3& point) {
  return scene.sdf(point);
}

/// Sphere tracing along origin + t * dir for t in [0, t_max]. Returns the
/// first t where the distance drops below `tolerance`.
std::optional<double> trace_first_hit(const GroundTruthScene& scene, const Vec3& origin,
                                      const Vec3& dir, double t_max, double tolerance = 1e-5);

/// Per-pixel z-depth in meters (0 = miss or beyond d_max), row-major H x W.
std::vector<float> render_depth(const GroundTruthScene& scene, const CameraIntrinsics& intrinsics,
                                const CameraPose& pose, double d_max = 3.0);

struct Tsdf {
  std::vector<float> tsdf;
  std::vector<std::uint8_t> occupied;
};

/// tsdf = clamp(sdf / lambda, -1, 1); occupied iff |sdf| < lambda.
Tsdf gt_tsdf(const GroundTruthScene& scene, std::span<const Vec3> centers, double lambda);

/// Deterministic descriptor of the first surface point seen through each
/// pixel. Channel 0 flags background; the rest encode the surface normal and
/// smooth position-dependent albedo codes, so views of the same point agree.
FeatureMap synth_features(const GroundTruthScene& scene, const CameraIntrinsics& intrinsics,
                          const CameraPose& pose, int channels, double d_max = 3.0);

/// Descriptor of a known surface point with a known normal (used by the
/// depth-driven provider). A null point yields the background code.
void surface_descriptor(const Vec3* point, const Vec3& normal, std::span<float> out);

/// Shaded albedo rendering for the photometric provider and dataset dumps.
std::vector<std::uint8_t> render_color(const GroundTruthScene& scene,
                                       const CameraIntrinsics& intrinsics,
                                       const CameraPose& pose, double d_max = 3.0);

struct CameraTrajectory {
  enum class Kind { kOrbit, kLine, kLemniscate };
  Kind kind = Kind::kOrbit;
  int count = 40;
  // Orbit / lemniscate.
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
  double height = 1.0;
  double start_angle_deg = 0.0;
  double laps = 1.0;
  // Orbit only: look away from the center, pitched down by tilt_deg.
  bool outward = false;
  double tilt_deg = 0.0;
  // Line.
  Vec3 start = Vec3::Zero();
  Vec3 end = Vec3::UnitX();
  // Look-at target when not outward.
  Vec3 target = Vec3::Zero();
  Vec3 up = Vec3::UnitZ();

  std::vector<CameraPose> poses() const;
};

struct SceneDescription {
  std::string name;
  GroundTruthScene scene;
  CameraIntrinsics intrinsics;
  CameraTrajectory trajectory;
};

/// Line-oriented key=value scene format, one entity per line:
///   camera width=640 height=480 fx=500 fy=500 cx=319.5 cy=239.5
///   sphere center=x,y,z radius=r [tag=name]
///   box center=.. half_extents=.. [inside_out=true] [rotation_deg=rx,ry,rz]
///   capsule a=.. b=.. radius=r
///   plane normal=.. offset=d
///   trajectory type=orbit|line|lemniscate count=n ...
SceneDescription parse_scene(const std::string& text, const std::string& origin = "<string>");
SceneDescription load_scene(const std::filesystem::path& path);
std::string format_scene(const SceneDescription& scene);

/// Canonical scenes: "room", "sphere-orbit", "two-planes".
SceneDescription canonical_scene(const std::string& name);

/// Writes poses.txt, intrinsics.txt, depth/<id>.png and color/<id>.png for
/// every trajectory pose.
void write_dataset(const std::filesystem::path& dir, const SceneDescription& scene,
                   double d_max = 3.0);

/// Surface points seen by the given cameras within d_max, thinned to at
/// most one point per `spacing`-sized cell. Ground truth for evaluation.
std::vector<Vec3> visible_surface_samples(const GroundTruthScene& scene,
                                          std::span<const Camera> cameras, double d_max,
                                          double spacing);

}  // namespace visfuse
