#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "visfuse/config.hpp"
#include "visfuse/evaluation.hpp"
#include "visfuse/features.hpp"
#include "visfuse/fragmenter.hpp"
#include "visfuse/global_fusion.hpp"
#include "visfuse/sparsifier.hpp"
#include "visfuse/surface.hpp"
#include "visfuse/synthscene.hpp"

namespace visfuse {

struct LevelLog {
  bool reached = false;
  std::size_t voxels_before = 0;  // level grid before sparsification
  std::size_t voxels_after = 0;   // kept voxels
  std::size_t missing_parents = 0;
  LevelLosses losses;
  double ms = 0.0;
};

struct StageTimes {
  double features = 0.0;
  double visibility = 0.0;
  double heads = 0.0;
  double sparsify = 0.0;
  double fusion = 0.0;
};

struct FragmentLog {
  int index = 0;
  int first_frame = 0;
  int last_frame = 0;
  std::array<LevelLog, 3> levels;
  bool has_losses = false;
  double total_loss = 0.0;
  StageTimes stages;
  double ms = 0.0;

  /// One tab-separated line of key=value fields.
  std::string to_line() const;
};

/// Observation points for experiments and tests.
struct ReconstructorHooks {
  /// May modify the local occupancy before sparsification.
  std::function<void(int fragment, int level, const SparseVoxelGrid& grid, std::vector<float>& occupancy)>
      occupancy;
  /// Sees the level grid, the level cameras and the keep mask.
  std::function<void(int fragment, int level, const SparseVoxelGrid& grid, std::span<const Camera> cameras,
                     const KeepMask& keep)>
      kept;
};

/// Incremental coarse-to-fine reconstruction over a stream of fragments.
/// The scene is optional ground truth (oracle modes, losses, synthetic
/// features); it must outlive the reconstructor.
class Reconstructor {
 public:
  Reconstructor(PipelineConfig config, const GroundTruthScene* scene, ReconstructorHooks hooks = {});

  const FragmentLog& integrate(const Fragment& fragment);

  /// Streaming input: keyframe selection and fragment assembly happen here;
  /// returns the fragment log when this frame completed a fragment.
  std::optional<FragmentLog> push_frame(const FrameRecord& frame);

  TriangleMesh extract_mesh() const;

  const GlobalVolume& volume() const { return volume_; }
  const std::vector<FragmentLog>& logs() const { return logs_; }
  /// Full-resolution cameras of every integrated keyframe.
  const std::vector<Camera>& integrated_cameras() const { return cameras_; }
  const LevelParams& params(int level) const { return params_.at(static_cast<std::size_t>(level - 1)); }
  const PipelineConfig& config() const { return config_; }

 private:
  PipelineConfig config_;
  const GroundTruthScene* scene_;
  ReconstructorHooks hooks_;
  std::unique_ptr<FeatureProvider> provider_;
  std::array<LevelParams, 3> params_;
  GlobalVolume volume_;
  std::vector<FragmentLog> logs_;
  std::vector<Camera> cameras_;
  KeyframeSelector selector_;
  std::vector<FrameRecord> pending_;
  int next_fragment_ = 0;
};

/// Frames and optional ground truth resolved from config.scene (file or
/// canonical name) or config.dataset.
struct InputStream {
  std::vector<FrameRecord> frames;
  std::optional<SceneDescription> scene;
};
InputStream load_input(const PipelineConfig& config);

struct RunResult {
  TriangleMesh mesh;
  std::optional<ReconMetrics> metrics;
  std::vector<FragmentLog> fragments;
  double seconds = 0.0;
};

/// Ground-truth surface samples for the cameras a run integrated.
PointCloud ground_truth_samples(const GroundTruthScene& scene, std::span<const Camera> cameras,
                                const PipelineConfig& config);

/// Batch run. Writes mesh.ply, metrics.json (with ground truth) and
/// fragments.log into config.output_dir when it is set. Throws EmptyResult
/// before writing anything if the stream is shorter than one fragment.
RunResult run_pipeline(const PipelineConfig& config, ReconstructorHooks hooks = {});
RunResult run_pipeline(const PipelineConfig& config, const InputStream& input, ReconstructorHooks hooks = {});

void write_run_outputs(const PipelineConfig& config, const RunResult& result);

/// One CSV row per config: label, strategy, predictor, head, the six
/// metrics, kept voxels per level and runtime.
std::string ablation_report(std::span<const PipelineConfig> configs);

}  // namespace visfuse
