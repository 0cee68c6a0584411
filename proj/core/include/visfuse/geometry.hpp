#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace visfuse {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Index3 = Eigen::Vector3i;

/// Pinhole intrinsics. Pixel (0,0) is the center of the top-left pixel.
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  void validate() const;

  /// Intrinsics of the same camera observed at `scale` times the resolution
  /// (e.g. 1/16 for a coarse feature map). Pixel centers stay consistent.
  CameraIntrinsics scaled(double scale) const;

  Mat3 matrix() const;
};

/// World-to-camera rigid transform: x_cam = rotation * x_world + translation.
struct CameraPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  void validate() const;

  Vec3 camera_center() const { return -rotation.transpose() * translation; }
  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
  Vec3 to_world(const Vec3& cam) const { return rotation.transpose() * (cam - translation); }

  /// Builds the pose from a row-major camera-to-world 4x4 matrix.
  static CameraPose from_camera_to_world(const Mat4& c2w);
  Mat4 camera_to_world() const;

  /// Camera at `eye` looking at `target`; image y points along -`up`.
  static CameraPose look_at(const Vec3& eye, const Vec3& target, const Vec3& up);
};

struct Camera {
  CameraIntrinsics intrinsics;
  CameraPose pose;
};

struct Projection {
  Vec2 pixel;
  double depth = 0.0;
};

/// Axis-aligned voxel grid. Voxel v has center origin + (v + 0.5) * voxel_size.
struct VoxelGridSpec {
  Vec3 origin = Vec3::Zero();
  double voxel_size = 0.0;
  Index3 dims = Index3::Zero();
  int level = 1;

  void validate() const;

  std::int64_t voxel_count() const {
    return std::int64_t{dims.x()} * dims.y() * dims.z();
  }
  bool contains(const Index3& v) const {
    return (v.array() >= 0).all() && (v.array() < dims.array()).all();
  }
  Vec3 center(const Index3& v) const {
    return origin + (v.cast<double>().array() + 0.5).matrix() * voxel_size;
  }
  std::int64_t linear_index(const Index3& v) const {
    return (std::int64_t{v.z()} * dims.y() + v.y()) * dims.x() + v.x();
  }
  Index3 from_linear(std::int64_t i) const;

  /// Integer offset of this grid's origin in units of its voxel size. Local
  /// index v corresponds to world-aligned index v + origin_index().
  Index3 origin_index() const;

  /// Next finer level: half the voxel size, twice the dims, same origin.
  VoxelGridSpec refined() const;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double t_min = 0.0;
  double t_max = 0.0;

  void validate() const;
  Vec3 at(double t) const { return origin + t * direction; }
};

/// Dense H x W x C float image, channel-fastest layout.
struct FeatureMap {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  FeatureMap() = default;
  FeatureMap(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {}

  std::span<float> at(int y, int x) {
    return {data.data() + (static_cast<std::size_t>(y) * width + x) * channels,
            static_cast<std::size_t>(channels)};
  }
  std::span<const float> at(int y, int x) const {
    return {data.data() + (static_cast<std::size_t>(y) * width + x) * channels,
            static_cast<std::size_t>(channels)};
  }
};

/// Perspective projection. Returns nullopt when the point is behind the
/// camera or falls outside [0,width) x [0,height). Throws InvalidInput on NaN.
std::optional<Projection> project_point(const CameraIntrinsics& intrinsics,
                                        const CameraPose& pose, const Vec3& point);

/// Inverse of project_point for a known depth.
Vec3 unproject(const CameraIntrinsics& intrinsics, const CameraPose& pose,
               const Vec2& pixel, double depth);

/// Unit world-space direction of the viewing ray through `pixel`, plus the
/// ray length per unit depth (so t = depth * length_per_depth).
std::pair<Vec3, double> pixel_ray(const CameraIntrinsics& intrinsics,
                                  const CameraPose& pose, const Vec2& pixel);

/// Bilinear interpolation at `pixel` = (x, y). Writes map.channels values to
/// `out`. Throws OutOfBounds outside [0, W-1] x [0, H-1].
void bilinear_sample(const FeatureMap& map, const Vec2& pixel, std::span<float> out);
std::vector<float> bilinear_sample(const FeatureMap& map, const Vec2& pixel);

/// Fragment bounding volume at the coarse voxel size: the axis-aligned box
/// enclosing every camera center and the four far-plane corners at depth
/// d_max, snapped outward to the voxel lattice and padded by one voxel.
VoxelGridSpec compute_fbv(std::span<const Camera> cameras, double d_max,
                          double voxel_size);

/// Voxels whose boxes overlap the ray segment with positive length, ordered
/// by entry distance. Incremental grid stepping; ties at edges and corners
/// advance the lowest axis first.
std::vector<Index3> traverse_ray(const VoxelGridSpec& grid, const Ray& ray);

/// Same traversal, also reporting the [entry, exit) parameter per voxel.
struct RaySpan {
  Index3 voxel;
  double t_enter;
  double t_exit;
};
void traverse_ray(const VoxelGridSpec& grid, const Ray& ray, std::vector<RaySpan>& out);

}  // namespace visfuse
