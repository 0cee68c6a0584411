#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "visfuse/geometry.hpp"

namespace visfuse {

struct FrameRecord {
  int frame_id = 0;
  CameraIntrinsics intrinsics;
  CameraPose pose;
  std::optional<std::filesystem::path> image_path;
  std::optional<std::filesystem::path> depth_path;

  Camera camera() const { return {intrinsics, pose}; }
};

inline constexpr int kNumLevels = 3;

struct Fragment {
  int index = 0;
  std::vector<FrameRecord> keyframes;
  std::array<VoxelGridSpec, kNumLevels> fbv;

  std::vector<Camera> cameras() const;
};

struct KeyframeThresholds {
  double translation_m = 0.1;
  double rotation_deg = 15.0;
};

/// Relative rotation angle between two poses, in degrees.
double rotation_angle_deg(const CameraPose& a, const CameraPose& b);

/// First frame is always a keyframe; later frames qualify when their camera
/// moved more than either threshold since the last keyframe. Returns the
/// selected frame ids.
std::vector<int> select_keyframes(std::span<const FrameRecord> frames,
                                  const KeyframeThresholds& thresholds = {});

/// Incremental form of select_keyframes for streaming input.
class KeyframeSelector {
 public:
  explicit KeyframeSelector(KeyframeThresholds thresholds = {}) : thresholds_(thresholds) {}
  bool accept(const FrameRecord& frame);

 private:
  KeyframeThresholds thresholds_;
  std::optional<CameraPose> last_;
};

struct FragmentLayout {
  int frames_per_fragment = 9;
  double d_max = 3.0;
  double coarse_voxel_size = 0.16;
};

/// Consecutive, non-overlapping windows of N keyframes; a trailing remainder
/// is dropped. Throws EmptyResult when fewer than N keyframes are given.
std::vector<Fragment> assemble_fragments(std::span<const FrameRecord> keyframes,
                                         const FragmentLayout& layout);

/// Builds one fragment (index, FBV at all levels) from exactly N keyframes.
Fragment make_fragment(int index, std::vector<FrameRecord> keyframes, const FragmentLayout& layout);

/// Reads the dataset layout: poses.txt (frame_id + row-major 4x4
/// camera-to-world per line), intrinsics.txt (fx fy cx cy width height),
/// and optional depth/<id>.png, color/<id>.png.
std::vector<FrameRecord> load_dataset(const std::filesystem::path& dir);

}  // namespace visfuse
