#include "visfuse/fragmenter.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <spdlog/spdlog.h>

#include "visfuse/error.hpp"

namespace visfuse {

std::vector<Camera> Fragment::cameras() const {
  std::vector<Camera> cams;
  cams.reserve(keyframes.size());
  for (const FrameRecord& f : keyframes) cams.push_back(f.camera());
  return cams;
}

double rotation_angle_deg(const CameraPose& a, const CameraPose& b) {
  const Mat3 rel = a.rotation * b.rotation.transpose();
  const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

bool KeyframeSelector::accept(const FrameRecord& frame) {
  if (!last_) {
    last_ = frame.pose;
    return true;
  }
  const double moved = (frame.pose.camera_center() - last_->camera_center()).norm();
  const double turned = rotation_angle_deg(frame.pose, *last_);
  if (moved > thresholds_.translation_m || turned > thresholds_.rotation_deg) {
    last_ = frame.pose;
    return true;
  }
  return false;
}

std::vector<int> select_keyframes(std::span<const FrameRecord> frames,
                                  const KeyframeThresholds& thresholds) {
  if (!(thresholds.translation_m > 0.0) || !(thresholds.rotation_deg > 0.0)) {
    throw InvalidInput("select_keyframes: thresholds must be positive");
  }
  KeyframeSelector selector(thresholds);
  std::vector<int> ids;
  for (const FrameRecord& f : frames) {
    if (selector.accept(f)) ids.push_back(f.frame_id);
  }
  return ids;
}

Fragment make_fragment(int index, std::vector<FrameRecord> keyframes, const FragmentLayout& layout) {
  if (static_cast<int>(keyframes.size()) != layout.frames_per_fragment) {
    throw InvalidInput("make_fragment: expected " + std::to_string(layout.frames_per_fragment) +
                       " keyframes");
  }
  Fragment frag;
  frag.index = index;
  frag.keyframes = std::move(keyframes);
  const std::vector<Camera> cams = frag.cameras();
  frag.fbv[0] = compute_fbv(cams, layout.d_max, layout.coarse_voxel_size);
  for (int l = 1; l < kNumLevels; ++l) frag.fbv[l] = frag.fbv[l - 1].refined();
  return frag;
}

std::vector<Fragment> assemble_fragments(std::span<const FrameRecord> keyframes,
                                         const FragmentLayout& layout) {
  const int n = layout.frames_per_fragment;
  if (n < 2) throw InvalidInput("assemble_fragments: N must be at least 2");
  const auto count = static_cast<int>(keyframes.size());
  if (count < n) {
    throw EmptyResult("assemble_fragments: " + std::to_string(count) +
                      " keyframes, fewer than one fragment of " + std::to_string(n));
  }
  const int fragments = count / n;
  if (const int dropped = count - fragments * n; dropped > 0) {
    spdlog::info("dropping {} trailing keyframes that do not fill a fragment", dropped);
  }
  std::vector<Fragment> out;
  out.reserve(static_cast<std::size_t>(fragments));
  for (int t = 0; t < fragments; ++t) {
    std::vector<FrameRecord> window(keyframes.begin() + t * n, keyframes.begin() + (t + 1) * n);
    out.push_back(make_fragment(t, std::move(window), layout));
  }
  return out;
}

std::vector<FrameRecord> load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError(dir.string(), "dataset directory not found");

  CameraIntrinsics intr;
  {
    std::ifstream in(dir / "intrinsics.txt");
    if (!in) throw IoError((dir / "intrinsics.txt").string(), "cannot open");
    if (!(in >> intr.fx >> intr.fy >> intr.cx >> intr.cy >> intr.width >> intr.height)) {
      throw IoError((dir / "intrinsics.txt").string(), "expected 'fx fy cx cy width height'");
    }
    intr.validate();
  }

  std::ifstream in(dir / "poses.txt");
  if (!in) throw IoError((dir / "poses.txt").string(), "cannot open");
  std::vector<FrameRecord> frames;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    FrameRecord rec;
    Mat4 c2w;
    if (!(ls >> rec.frame_id)) throw IoError((dir / "poses.txt").string(), "bad line " + std::to_string(lineno));
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) {
        if (!(ls >> c2w(r, c))) {
          throw IoError((dir / "poses.txt").string(), "expected 16 values on line " + std::to_string(lineno));
        }
      }
    }
    if (!frames.empty() && rec.frame_id <= frames.back().frame_id) {
      throw IoError((dir / "poses.txt").string(), "frame ids must be strictly increasing");
    }
    rec.intrinsics = intr;
    rec.pose = CameraPose::from_camera_to_world(c2w);
    rec.pose.validate();
    const fs::path depth = dir / "depth" / (std::to_string(rec.frame_id) + ".png");
    const fs::path color = dir / "color" / (std::to_string(rec.frame_id) + ".png");
    if (fs::exists(depth)) rec.depth_path = depth;
    if (fs::exists(color)) rec.image_path = color;
    frames.push_back(std::move(rec));
  }
  return frames;
}

}  // namespace visfuse
