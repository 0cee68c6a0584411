#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "visfuse/fragmenter.hpp"
#include "visfuse/global_fusion.hpp"
#include "visfuse/local_fusion.hpp"

namespace visfuse {

enum class SparsifyStrategy { kSlidingWindow, kTopK, kThreshold };
SparsifyStrategy parse_strategy(std::string_view name);
std::string_view to_string(SparsifyStrategy strategy);

struct PipelineConfig {
  std::array<double, 3> voxel_size = {0.16, 0.08, 0.04};
  int frames_per_fragment = 9;         // N
  int window = 9;                      // K
  double truncation_multiplier = 3.0;  // lambda = multiplier * voxel size
  double d_max = 3.0;

  PredictorMode predictor = PredictorMode::kOracle;
  HeadMode head = HeadMode::kOracle;
  std::string feature_provider = "depth_oracle";
  HeuristicConstants heuristic;

  std::array<double, 3> loss_weights = kDefaultLossWeights;
  KeyframeThresholds keyframe;
  double metric_threshold_cm = 5.0;

  SparsifyStrategy strategy = SparsifyStrategy::kSlidingWindow;
  double threshold_theta = 0.5;
  bool window_exclude_last = false;
  int ray_stride = 1;
  std::array<int, 3> feature_stride = {16, 8, 4};
  std::array<int, 3> channels = {24, 16, 8};

  UpsampleMode residual_upsample = UpsampleMode::kNearest;
  bool zero_residual = false;
  bool mesh_skip_partial_cells = true;

  double sample_density = 10000.0;  // points per m^2
  double gt_spacing = 0.01;         // m
  double gt_image_scale = 0.5;
  double fragment_budget_ms = 500.0;
  int max_fragments = 0;  // 0 = all

  std::uint64_t seed = 0;
  std::string label;
  std::string scene;    // scene file or canonical scene name
  std::string dataset;  // dataset directory
  std::string external_dir;
  std::string output_dir;
  bool write_obj = false;
  bool dump_kept_voxels = false;

  double lambda(int level) const { return truncation_multiplier * voxel_size.at(static_cast<std::size_t>(level - 1)); }
  FragmentLayout layout() const { return {frames_per_fragment, d_max, voxel_size[0]}; }

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Sets one key from its text value. Throws ConfigError for unknown keys or
/// malformed values.
void set_config_value(PipelineConfig& config, std::string_view key, std::string_view value);

/// Flat "key = value" lines; '#' starts a comment.
PipelineConfig parse_config(std::string_view text, const std::string& origin = "<string>");
PipelineConfig load_config(const std::filesystem::path& path);
std::string format_config(const PipelineConfig& config);

}  // namespace visfuse
