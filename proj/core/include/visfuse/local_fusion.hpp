#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "visfuse/geometry.hpp"
#include "visfuse/sparse_grid.hpp"
#include "visfuse/sparsifier.hpp"
#include "visfuse/synthscene.hpp"

namespace visfuse {

using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-voxel, per-view back-projected features (D x N x C) with a validity
/// mask (D x N). Invalid entries are zero vectors.
struct FeatureVolume {
  std::size_t voxels = 0;
  int views = 0;
  int channels = 0;
  std::vector<float> data;
  std::vector<std::uint8_t> valid;

  FeatureVolume() = default;
  FeatureVolume(std::size_t d, int n, int c)
      : voxels(d), views(n), channels(c),
        data(d * static_cast<std::size_t>(n) * static_cast<std::size_t>(c), 0.0f),
        valid(d * static_cast<std::size_t>(n), 0) {}

  std::span<float> at(std::size_t d, int n) {
    return {data.data() + (d * static_cast<std::size_t>(views) + static_cast<std::size_t>(n)) * channels,
            static_cast<std::size_t>(channels)};
  }
  std::span<const float> at(std::size_t d, int n) const {
    return {data.data() + (d * static_cast<std::size_t>(views) + static_cast<std::size_t>(n)) * channels,
            static_cast<std::size_t>(channels)};
  }
  bool is_valid(std::size_t d, int n) const { return valid[d * static_cast<std::size_t>(views) + static_cast<std::size_t>(n)] != 0; }
};

/// Flattened pairwise cosine similarities (D x N(N-1)), ordered row-major
/// over (m, n) with the diagonal removed.
struct SimilarityVolume {
  std::size_t voxels = 0;
  int views = 0;
  std::vector<float> flat;
  std::vector<std::uint8_t> pair_valid;
  std::vector<std::uint8_t> view_valid;  // copied from the feature volume

  int pairs() const { return views * (views - 1); }
  static int pair_index(int m, int n, int views) { return m * (views - 1) + (n < m ? n : n - 1); }
  float at(std::size_t d, int m, int n) const {
    return flat[d * static_cast<std::size_t>(pairs()) + static_cast<std::size_t>(pair_index(m, n, views))];
  }
  bool valid_pair(std::size_t d, int m, int n) const {
    return pair_valid[d * static_cast<std::size_t>(pairs()) + static_cast<std::size_t>(pair_index(m, n, views))] != 0;
  }
};

/// D x N fusion weights; each row sums to 1 or is all zero.
struct VisibilityWeights {
  std::size_t voxels = 0;
  int views = 0;
  std::vector<float> w;

  VisibilityWeights() = default;
  VisibilityWeights(std::size_t d, int n) : voxels(d), views(n), w(d * static_cast<std::size_t>(n), 0.0f) {}
  float& at(std::size_t d, int n) { return w[d * static_cast<std::size_t>(views) + static_cast<std::size_t>(n)]; }
  float at(std::size_t d, int n) const { return w[d * static_cast<std::size_t>(views) + static_cast<std::size_t>(n)]; }
  std::span<const float> row(std::size_t d) const {
    return {w.data() + d * static_cast<std::size_t>(views), static_cast<std::size_t>(views)};
  }

  /// Divides each row by its sum; all-zero rows stay zero.
  VisibilityWeights normalized() const;
};

struct LocalPrediction {
  std::vector<float> occupancy;  // [0, 1]
  std::vector<float> tsdf;       // [-1, 1]
};

/// F[d][n] = bilinear sample of map n at the projection of voxel d.
FeatureVolume backproject_features(const SparseVoxelGrid& grid, std::span<const FeatureMap> maps,
                                   std::span<const Camera> cameras, int expected_views);

SimilarityVolume pairwise_similarity(const FeatureVolume& fv);

enum class PredictorMode { kOracle, kHeuristic, kExternal };
PredictorMode parse_predictor_mode(std::string_view name, std::string_view field = "predictor");
std::string_view to_string(PredictorMode mode);

class VisibilityPredictor {
 public:
  virtual ~VisibilityPredictor() = default;
  virtual PredictorMode mode() const = 0;
  virtual VisibilityWeights predict(const SimilarityVolume& sv) const = 0;
};

/// Ground-truth visibility, normalized and restricted to valid views.
class OracleVisibility final : public VisibilityPredictor {
 public:
  explicit OracleVisibility(VisibilityWeights binary) : binary_(std::move(binary)) {}
  PredictorMode mode() const override { return PredictorMode::kOracle; }
  VisibilityWeights predict(const SimilarityVolume& sv) const override;

 private:
  VisibilityWeights binary_;
};

/// Per-view score = mean of max(S, 0) over the view's valid pairs; scores at
/// or below tau are zeroed and the rest renormalized.
class HeuristicVisibility final : public VisibilityPredictor {
 public:
  explicit HeuristicVisibility(double tau_vis = 0.1) : tau_(tau_vis) {}
  PredictorMode mode() const override { return PredictorMode::kHeuristic; }
  VisibilityWeights predict(const SimilarityVolume& sv) const override;

 private:
  double tau_;
};

/// Weights loaded from a VFW1 sidecar, masked and renormalized.
class ExternalVisibility final : public VisibilityPredictor {
 public:
  explicit ExternalVisibility(VisibilityWeights weights) : weights_(std::move(weights)) {}
  static ExternalVisibility from_file(const std::filesystem::path& path, int expected_level);
  PredictorMode mode() const override { return PredictorMode::kExternal; }
  VisibilityWeights predict(const SimilarityVolume& sv) const override;

 private:
  VisibilityWeights weights_;
};

/// Mean positive similarity of each valid view with the others (D x N).
std::vector<float> view_agreement_scores(const SimilarityVolume& sv);

VisibilityWeights predict_visibility(const SimilarityVolume& sv, const VisibilityPredictor& predictor);

/// VFW1 sidecar: "VFW1", uint32 level, uint32 D, uint32 N, then D*N float32,
/// all little-endian.
void write_visibility_sidecar(const std::filesystem::path& path, int level, const VisibilityWeights& w);
VisibilityWeights read_visibility_sidecar(const std::filesystem::path& path, int* level = nullptr);

/// F_hat[d] = sum_n w[d][n] * F[d][n].
FeatureMatrix fuse_features(const FeatureVolume& fv, const VisibilityWeights& w);

using HeadMode = PredictorMode;

struct HeuristicConstants {
  double tau_vis = 0.1;
  double logistic_a = 10.0;
  double logistic_b = 0.5;
};

/// Linear readout y = w . x + b on a feature vector.
struct LinearReadout {
  Eigen::VectorXf weight;
  float bias = 0.0f;
};

struct LocalHeadParams {
  LinearReadout occupancy;  // sigmoid applied
  LinearReadout tsdf;       // tanh applied
};

struct LocalHeadContext {
  HeadMode mode = HeadMode::kOracle;
  double lambda = 0.48;
  HeuristicConstants heuristic;
  int window = 9;
  const GroundTruthScene* scene = nullptr;     // oracle
  const RayBundle* rays = nullptr;             // heuristic
  const LocalHeadParams* params = nullptr;     // external
};

/// Local occupancy and TSDF for every voxel of the level grid.
LocalPrediction predict_local_heads(const FeatureMatrix& fused, const VisibilityWeights& w,
                                    const SimilarityVolume& sv, const SparseVoxelGrid& grid,
                                    std::span<const Camera> cameras, const LocalHeadContext& ctx);

struct GtVisibility {
  VisibilityWeights binary;
  VisibilityWeights normalized;
};

/// Visible = occupied (|sdf| < lambda), inside the view, and the first
/// surface hit from the camera is not earlier than half a voxel before the
/// voxel center.
GtVisibility ground_truth_visibility(const SparseVoxelGrid& grid, std::span<const Camera> cameras,
                                     const GroundTruthScene& scene, double lambda);

/// Mean squared difference to the row-normalized ground truth.
double loss_visibility(const VisibilityWeights& pred, const VisibilityWeights& gt_binary);
/// Mean binary cross entropy with predictions clamped to [1e-7, 1 - 1e-7].
double loss_occupancy(std::span<const float> pred, std::span<const std::uint8_t> gt);
/// Mean |l(pred) - l(gt)| with l(x) = sgn(x) log(|x| + 1).
double loss_tsdf(std::span<const float> pred, std::span<const float> gt);

}  // namespace visfuse
