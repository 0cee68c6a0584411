#include "visfuse/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "visfuse/error.hpp"
#include "visfuse/image_io.hpp"

namespace visfuse {

namespace {

// Full-resolution pixel matching the center of a feature pixel.
Vec2 to_full_res(const CameraIntrinsics& full, const CameraIntrinsics& level, int x, int y) {
  const double sx = static_cast<double>(full.width) / level.width;
  const double sy = static_cast<double>(full.height) / level.height;
  return {(x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5};
}

std::vector<float> load_gray(const FrameRecord& frame, const GroundTruthScene* scene, double d_max) {
  const CameraIntrinsics& intr = frame.intrinsics;
  std::vector<float> gray(static_cast<std::size_t>(intr.width) * intr.height);
  if (frame.image_path) {
    const io::ImageRgb8 img = io::read_png_rgb8(*frame.image_path);
    if (img.width != intr.width || img.height != intr.height) {
      throw IoError(frame.image_path->string(), "color image size does not match intrinsics");
    }
    for (std::size_t i = 0; i < gray.size(); ++i) {
      gray[i] = (0.299f * img.pixels[3 * i] + 0.587f * img.pixels[3 * i + 1] + 0.114f * img.pixels[3 * i + 2]) / 255.0f;
    }
    return gray;
  }
  if (scene == nullptr) throw ConfigError("feature_provider", "photometric features need color images or a scene");
  const auto rgb = render_color(*scene, intr, frame.pose, d_max);
  for (std::size_t i = 0; i < gray.size(); ++i) {
    gray[i] = (0.299f * rgb[3 * i] + 0.587f * rgb[3 * i + 1] + 0.114f * rgb[3 * i + 2]) / 255.0f;
  }
  return gray;
}

}  // namespace

FeatureMap ConstantFeatures::features(const FrameRecord&, const CameraIntrinsics& intrinsics,
                                      int channels) const {
  intrinsics.validate();
  if (channels <= 0) throw InvalidInput("ConstantFeatures: channels must be positive");
  return FeatureMap(intrinsics.height, intrinsics.width, channels, value_);
}

FeatureMap DepthOracleFeatures::features(const FrameRecord& frame, const CameraIntrinsics& intrinsics,
                                         int channels) const {
  if (scene_ != nullptr) return synth_features(*scene_, intrinsics, frame.pose, channels, d_max_);
  if (!frame.depth_path) {
    throw ConfigError("feature_provider", "depth_oracle features need a scene or depth images");
  }
  const io::Image16 depth = io::read_png16(*frame.depth_path);
  const CameraIntrinsics& full = frame.intrinsics;
  if (depth.width != full.width || depth.height != full.height) {
    throw IoError(frame.depth_path->string(), "depth image size does not match intrinsics");
  }
  auto point_at = [&](int x, int y) -> std::optional<Vec3> {
    x = std::clamp(x, 0, full.width - 1);
    y = std::clamp(y, 0, full.height - 1);
    const std::uint16_t mm = depth.pixels[static_cast<std::size_t>(y) * full.width + x];
    if (mm == 0 || mm * 1e-3 > d_max_) return std::nullopt;
    return unproject(full, frame.pose, Vec2(x, y), mm * 1e-3);
  };
  FeatureMap map(intrinsics.height, intrinsics.width, channels);
  for (int y = 0; y < intrinsics.height; ++y) {
    for (int x = 0; x < intrinsics.width; ++x) {
      const Vec2 f = to_full_res(full, intrinsics, x, y);
      const int px = static_cast<int>(std::lround(f.x()));
      const int py = static_cast<int>(std::lround(f.y()));
      const auto p = point_at(px, py);
      if (!p) {
        surface_descriptor(nullptr, Vec3::Zero(), map.at(y, x));
        continue;
      }
      const auto px1 = point_at(px + 1, py);
      const auto px0 = point_at(px - 1, py);
      const auto py1 = point_at(px, py + 1);
      const auto py0 = point_at(px, py - 1);
      Vec3 n = Vec3::Zero();
      if ((px1 || px0) && (py1 || py0)) {
        const Vec3 dx = px1 && px0 ? Vec3(*px1 - *px0) : px1 ? Vec3(*px1 - *p) : Vec3(*p - *px0);
        const Vec3 dy = py1 && py0 ? Vec3(*py1 - *py0) : py1 ? Vec3(*py1 - *p) : Vec3(*p - *py0);
        n = dy.cross(dx);
        if (n.norm() > 0.0) n.normalize();
        // Face the camera.
        if (n.dot(frame.pose.camera_center() - *p) < 0.0) n = -n;
      }
      surface_descriptor(&*p, n, map.at(y, x));
    }
  }
  return map;
}

FeatureMap PhotometricFeatures::features(const FrameRecord& frame, const CameraIntrinsics& intrinsics,
                                         int channels) const {
  if (channels <= 0) throw InvalidInput("PhotometricFeatures: channels must be positive");
  const std::vector<float> gray = load_gray(frame, scene_, d_max_);
  const CameraIntrinsics& full = frame.intrinsics;
  const double radius = 0.5 * static_cast<double>(full.width) / intrinsics.width;
  auto sample = [&](double x, double y) {
    const int xi = std::clamp(static_cast<int>(std::lround(x)), 0, full.width - 1);
    const int yi = std::clamp(static_cast<int>(std::lround(y)), 0, full.height - 1);
    return gray[static_cast<std::size_t>(yi) * full.width + xi];
  };
  FeatureMap map(intrinsics.height, intrinsics.width, channels);
  std::vector<float> patch(static_cast<std::size_t>(channels));
  for (int y = 0; y < intrinsics.height; ++y) {
    for (int x = 0; x < intrinsics.width; ++x) {
      const Vec2 c = to_full_res(full, intrinsics, x, y);
      double mean = 0.0;
      for (int k = 0; k < channels; ++k) {
        const double t = channels > 1 ? static_cast<double>(k) / (channels - 1) : 0.0;
        const double angle = 2.0 * std::numbers::pi * 1.618033988749895 * k;
        patch[static_cast<std::size_t>(k)] =
            sample(c.x() + t * radius * std::cos(angle), c.y() + t * radius * std::sin(angle));
        mean += patch[static_cast<std::size_t>(k)];
      }
      mean /= channels;
      auto out = map.at(y, x);
      for (int k = 0; k < channels; ++k) {
        out[static_cast<std::size_t>(k)] = static_cast<float>(patch[static_cast<std::size_t>(k)] - mean);
      }
      // Flat patches would be all zero; keep the intensity in channel 0.
      out[0] += static_cast<float>(mean);
    }
  }
  return map;
}

std::unique_ptr<FeatureProvider> make_feature_provider(std::string_view name,
                                                       const GroundTruthScene* scene, double d_max) {
  if (name == "constant") return std::make_unique<ConstantFeatures>();
  if (name == "depth_oracle" || name == "depth-oracle") return std::make_unique<DepthOracleFeatures>(scene, d_max);
  if (name == "photometric") return std::make_unique<PhotometricFeatures>(scene, d_max);
  throw ConfigError("feature_provider", "unknown provider '" + std::string(name) + "'");
}

}  // namespace visfuse
