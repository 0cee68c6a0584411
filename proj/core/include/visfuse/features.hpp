#pragma once

#include <memory>
#include <string_view>

#include "visfuse/fragmenter.hpp"
#include "visfuse/geometry.hpp"
#include "visfuse/synthscene.hpp"

namespace visfuse {

/// Source of per-view 2D feature maps. Maps have the size of `intrinsics`,
/// which are the frame intrinsics rescaled to the level's feature stride.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual std::string_view name() const = 0;
  virtual FeatureMap features(const FrameRecord& frame, const CameraIntrinsics& intrinsics,
                              int channels) const = 0;
};

/// Every pixel carries the same vector (tests).
class ConstantFeatures final : public FeatureProvider {
 public:
  explicit ConstantFeatures(float value = 1.0f) : value_(value) {}
  std::string_view name() const override { return "constant"; }
  FeatureMap features(const FrameRecord& frame, const CameraIntrinsics& intrinsics,
                      int channels) const override;

 private:
  float value_;
};

/// Descriptors of the first-hit surface point. With a scene the hit is ray
/// traced; otherwise it comes from the frame's depth PNG, with normals from
/// neighboring depth samples.
class DepthOracleFeatures final : public FeatureProvider {
 public:
  DepthOracleFeatures(const GroundTruthScene* scene, double d_max) : scene_(scene), d_max_(d_max) {}
  std::string_view name() const override { return "depth_oracle"; }
  FeatureMap features(const FrameRecord& frame, const CameraIntrinsics& intrinsics,
                      int channels) const override;

 private:
  const GroundTruthScene* scene_;
  double d_max_;
};

/// Zero-mean grayscale patch descriptors sampled on a spiral around each
/// feature pixel. Reads color/<id>.png, or renders the scene when no image
/// is available.
class PhotometricFeatures final : public FeatureProvider {
 public:
  PhotometricFeatures(const GroundTruthScene* scene, double d_max) : scene_(scene), d_max_(d_max) {}
  std::string_view name() const override { return "photometric"; }
  FeatureMap features(const FrameRecord& frame, const CameraIntrinsics& intrinsics,
                      int channels) const override;

 private:
  const GroundTruthScene* scene_;
  double d_max_;
};

/// "constant", "depth_oracle" (or "depth-oracle"), "photometric".
std::unique_ptr<FeatureProvider> make_feature_provider(std::string_view name,
                                                       const GroundTruthScene* scene, double d_max);

}  // namespace visfuse
