#include "visfuse/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Geometry>

#include "visfuse/error.hpp"

namespace visfuse {

namespace {

bool finite(const Vec3& v) { return v.allFinite(); }

}  // namespace

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidInput("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw InvalidInput("intrinsics: image size must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw InvalidInput("intrinsics: principal point outside the image");
  }
}

CameraIntrinsics CameraIntrinsics::scaled(double scale) const {
  CameraIntrinsics k;
  k.fx = fx * scale;
  k.fy = fy * scale;
  // Pixel centers sit at integer coordinates, so the principal point shifts
  // by half a pixel on each side of the resampling.
  k.cx = (cx + 0.5) * scale - 0.5;
  k.cy = (cy + 0.5) * scale - 0.5;
  k.width = std::max(1, static_cast<int>(std::lround(width * scale)));
  k.height = std::max(1, static_cast<int>(std::lround(height * scale)));
  k.cx = std::clamp(k.cx, 0.0, std::nextafter(static_cast<double>(k.width), 0.0));
  k.cy = std::clamp(k.cy, 0.0, std::nextafter(static_cast<double>(k.height), 0.0));
  return k;
}

Mat3 CameraIntrinsics::matrix() const {
  Mat3 k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

void CameraPose::validate() const {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw InvalidInput("pose: non-finite entries");
  }
  if (!(rotation.transpose() * rotation).isIdentity(1e-6)) {
    throw InvalidInput("pose: rotation is not orthonormal");
  }
  if (std::abs(rotation.determinant() - 1.0) > 1e-6) {
    throw InvalidInput("pose: rotation determinant is not 1");
  }
}

CameraPose CameraPose::from_camera_to_world(const Mat4& c2w) {
  CameraPose pose;
  const Mat3 r_c2w = c2w.topLeftCorner<3, 3>();
  const Vec3 t_c2w = c2w.topRightCorner<3, 1>();
  pose.rotation = r_c2w.transpose();
  pose.translation = -pose.rotation * t_c2w;
  return pose;
}

Mat4 CameraPose::camera_to_world() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation.transpose();
  m.topRightCorner<3, 1>() = camera_center();
  return m;
}

CameraPose CameraPose::look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-12) throw InvalidInput("look_at: view direction parallel to up");
  right.normalize();
  const Vec3 down = forward.cross(right);
  CameraPose pose;
  pose.rotation.row(0) = right.transpose();
  pose.rotation.row(1) = down.transpose();
  pose.rotation.row(2) = forward.transpose();
  pose.translation = -pose.rotation * eye;
  return pose;
}

void VoxelGridSpec::validate() const {
  if (!(voxel_size > 0.0)) throw InvalidInput("grid: voxel size must be positive");
  if ((dims.array() <= 0).any()) throw InvalidInput("grid: dims must be positive");
  if (!finite(origin)) throw InvalidInput("grid: non-finite origin");
}

Index3 VoxelGridSpec::from_linear(std::int64_t i) const {
  const std::int64_t x = i % dims.x();
  const std::int64_t rest = i / dims.x();
  return {static_cast<int>(x), static_cast<int>(rest % dims.y()),
          static_cast<int>(rest / dims.y())};
}

Index3 VoxelGridSpec::origin_index() const {
  return {static_cast<int>(std::llround(origin.x() / voxel_size)),
          static_cast<int>(std::llround(origin.y() / voxel_size)),
          static_cast<int>(std::llround(origin.z() / voxel_size))};
}

VoxelGridSpec VoxelGridSpec::refined() const {
  VoxelGridSpec fine = *this;
  fine.voxel_size = voxel_size / 2.0;
  fine.dims = dims * 2;
  fine.level = level + 1;
  return fine;
}

void Ray::validate() const {
  if (!finite(origin) || !finite(direction)) throw InvalidInput("ray: non-finite origin or direction");
  if (std::abs(direction.norm() - 1.0) > 1e-9) throw InvalidInput("ray: direction is not unit length");
  if (!(t_min >= 0.0 && t_min < t_max)) throw InvalidInput("ray: require 0 <= t_min < t_max");
}

std::optional<Projection> project_point(const CameraIntrinsics& intrinsics,
                                        const CameraPose& pose, const Vec3& point) {
  if (point.hasNaN()) throw InvalidInput("project_point: NaN point");
  const Vec3 cam = pose.to_camera(point);
  if (!(cam.z() > 0.0)) return std::nullopt;
  const double u = intrinsics.fx * cam.x() / cam.z() + intrinsics.cx;
  const double v = intrinsics.fy * cam.y() / cam.z() + intrinsics.cy;
  if (!(u >= 0.0 && u < intrinsics.width && v >= 0.0 && v < intrinsics.height)) {
    return std::nullopt;
  }
  return Projection{Vec2(u, v), cam.z()};
}

Vec3 unproject(const CameraIntrinsics& intrinsics, const CameraPose& pose,
               const Vec2& pixel, double depth) {
  const Vec3 cam((pixel.x() - intrinsics.cx) / intrinsics.fx * depth,
                 (pixel.y() - intrinsics.cy) / intrinsics.fy * depth, depth);
  return pose.to_world(cam);
}

std::pair<Vec3, double> pixel_ray(const CameraIntrinsics& intrinsics,
                                  const CameraPose& pose, const Vec2& pixel) {
  const Vec3 cam((pixel.x() - intrinsics.cx) / intrinsics.fx,
                 (pixel.y() - intrinsics.cy) / intrinsics.fy, 1.0);
  const double length = cam.norm();
  return {pose.rotation.transpose() * (cam / length), length};
}

void bilinear_sample(const FeatureMap& map, const Vec2& pixel, std::span<float> out) {
  const double x = pixel.x();
  const double y = pixel.y();
  if (!(x >= 0.0 && x <= map.width - 1 && y >= 0.0 && y <= map.height - 1)) {
    throw OutOfBounds("bilinear_sample: pixel outside feature map");
  }
  if (out.size() != static_cast<std::size_t>(map.channels)) {
    throw InvalidInput("bilinear_sample: output width mismatch");
  }
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, map.width - 1);
  const int y1 = std::min(y0 + 1, map.height - 1);
  const double ax = x - x0;
  const double ay = y - y0;
  const auto f00 = map.at(y0, x0);
  const auto f01 = map.at(y0, x1);
  const auto f10 = map.at(y1, x0);
  const auto f11 = map.at(y1, x1);
  for (int c = 0; c < map.channels; ++c) {
    const double top = (1.0 - ax) * f00[c] + ax * f01[c];
    const double bottom = (1.0 - ax) * f10[c] + ax * f11[c];
    out[c] = static_cast<float>((1.0 - ay) * top + ay * bottom);
  }
}

std::vector<float> bilinear_sample(const FeatureMap& map, const Vec2& pixel) {
  std::vector<float> out(static_cast<std::size_t>(map.channels));
  bilinear_sample(map, pixel, out);
  return out;
}

VoxelGridSpec compute_fbv(std::span<const Camera> cameras, double d_max, double voxel_size) {
  if (cameras.empty()) throw InvalidInput("compute_fbv: empty camera list");
  if (!(d_max > 0.0) || !(voxel_size > 0.0)) {
    throw InvalidInput("compute_fbv: d_max and voxel size must be positive");
  }
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const Camera& cam : cameras) {
    cam.intrinsics.validate();
    const double w = cam.intrinsics.width;
    const double h = cam.intrinsics.height;
    const Vec3 corners[5] = {
        cam.pose.camera_center(),
        unproject(cam.intrinsics, cam.pose, {0.0, 0.0}, d_max),
        unproject(cam.intrinsics, cam.pose, {w, 0.0}, d_max),
        unproject(cam.intrinsics, cam.pose, {0.0, h}, d_max),
        unproject(cam.intrinsics, cam.pose, {w, h}, d_max),
    };
    for (const Vec3& c : corners) {
      lo = lo.cwiseMin(c);
      hi = hi.cwiseMax(c);
    }
  }
  VoxelGridSpec spec;
  spec.voxel_size = voxel_size;
  spec.level = 1;
  for (int a = 0; a < 3; ++a) {
    const auto lo_idx = static_cast<long long>(std::floor(lo[a] / voxel_size)) - 1;
    const auto hi_idx = static_cast<long long>(std::ceil(hi[a] / voxel_size)) + 1;
    spec.origin[a] = static_cast<double>(lo_idx) * voxel_size;
    spec.dims[a] = static_cast<int>(hi_idx - lo_idx);
  }
  return spec;
}

namespace {

// Parameter at which the ray crosses the lattice plane k along `axis`.
inline double plane_t(const VoxelGridSpec& g, const Ray& r, int axis, int k) {
  return (g.origin[axis] + k * g.voxel_size - r.origin[axis]) / r.direction[axis];
}

// [enter, exit) of the slab occupied by index i along `axis`.
inline void slab(const VoxelGridSpec& g, const Ray& r, int axis, int i, double& enter,
                 double& exit) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const double d = r.direction[axis];
  if (d > 0.0) {
    enter = plane_t(g, r, axis, i);
    exit = plane_t(g, r, axis, i + 1);
  } else if (d < 0.0) {
    enter = plane_t(g, r, axis, i + 1);
    exit = plane_t(g, r, axis, i);
  } else {
    enter = -kInf;
    exit = kInf;
  }
}

}  // namespace

void traverse_ray(const VoxelGridSpec& grid, const Ray& ray, std::vector<RaySpan>& out) {
  out.clear();
  ray.validate();
  constexpr double kInf = std::numeric_limits<double>::infinity();

  // Clip the segment against the grid box.
  double t0 = ray.t_min;
  double t1 = ray.t_max;
  Index3 idx;
  for (int a = 0; a < 3; ++a) {
    const double d = ray.direction[a];
    if (d == 0.0) {
      const double o = ray.origin[a];
      int i = static_cast<int>(std::floor((o - grid.origin[a]) / grid.voxel_size));
      i = std::clamp(i, -1, grid.dims[a]);
      while (i >= 0 && grid.origin[a] + i * grid.voxel_size > o) --i;
      while (i < grid.dims[a] && grid.origin[a] + (i + 1) * grid.voxel_size <= o) ++i;
      if (i < 0 || i >= grid.dims[a]) return;
      idx[a] = i;
      continue;
    }
    const double ta = plane_t(grid, ray, a, 0);
    const double tb = plane_t(grid, ray, a, grid.dims[a]);
    t0 = std::max(t0, std::min(ta, tb));
    t1 = std::min(t1, std::max(ta, tb));
  }
  if (!(t1 > t0)) return;

  // Index of the voxel occupied just after t0 along each moving axis.
  for (int a = 0; a < 3; ++a) {
    const double d = ray.direction[a];
    if (d == 0.0) continue;
    const int last = grid.dims[a] - 1;
    const double p = ray.origin[a] + t0 * d;
    int i = std::clamp(static_cast<int>(std::floor((p - grid.origin[a]) / grid.voxel_size)), 0, last);
    if (d > 0.0) {
      while (i > 0 && plane_t(grid, ray, a, i) > t0) --i;
      while (i < last && plane_t(grid, ray, a, i + 1) <= t0) ++i;
    } else {
      while (i < last && plane_t(grid, ray, a, i + 1) > t0) ++i;
      while (i > 0 && plane_t(grid, ray, a, i) <= t0) --i;
    }
    idx[a] = i;
  }

  Eigen::Vector3d enter;
  Eigen::Vector3d exit;
  for (int a = 0; a < 3; ++a) slab(grid, ray, a, idx[a], enter[a], exit[a]);
  while (true) {
    const double t_enter = std::max(ray.t_min, enter.maxCoeff());
    const double t_exit = std::min(ray.t_max, exit.minCoeff());
    if (t_exit > t_enter) out.push_back({idx, t_enter, t_exit});

    int step_axis = 0;
    double next = kInf;
    for (int a = 0; a < 3; ++a) {
      if (exit[a] < next) {
        next = exit[a];
        step_axis = a;
      }
    }
    if (next >= t1) break;
    idx[step_axis] += ray.direction[step_axis] > 0.0 ? 1 : -1;
    if (idx[step_axis] < 0 || idx[step_axis] >= grid.dims[step_axis]) break;
    slab(grid, ray, step_axis, idx[step_axis], enter[step_axis], exit[step_axis]);
  }
}

std::vector<Index3> traverse_ray(const VoxelGridSpec& grid, const Ray& ray) {
  std::vector<RaySpan> spans;
  traverse_ray(grid, ray, spans);
  std::vector<Index3> voxels;
  voxels.reserve(spans.size());
  for (const RaySpan& s : spans) voxels.push_back(s.voxel);
  return voxels;
}

}  // namespace visfuse
