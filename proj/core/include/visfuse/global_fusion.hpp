#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "visfuse/local_fusion.hpp"
#include "visfuse/sparse_grid.hpp"

namespace visfuse {

/// Per-voxel gated recurrent unit on concatenated [input; hidden]:
///   z = sigmoid(Wz [L; G] + bz)
///   r = sigmoid(Wr [L; G] + br)
///   h = tanh(Wh [L; r*G] + bh)
///   G' = (1 - z) * G + z * h
/// Each W is C x 2C, acting on input columns first, hidden columns second.
struct GruParams {
  int channels = 0;
  Eigen::MatrixXf update_w, reset_w, candidate_w;
  Eigen::VectorXf update_b, reset_b, candidate_b;

  void validate() const;

  /// Deterministic initialization: rows of random orthogonal matrices drawn
  /// from a seeded SplitMix64 stream, zero biases.
  static GruParams seeded(int channels, std::uint64_t seed);
};

FeatureMatrix gru_fuse(const FeatureMatrix& local, const FeatureMatrix& global, const GruParams& params);

/// All learnable state for one level, as stored in a VFG1 sidecar.
struct LevelParams {
  int level = 1;
  GruParams gru;
  LocalHeadParams local;
  LinearReadout global_tsdf;  // tanh applied

  static LevelParams seeded(int level, int channels, std::uint64_t seed);
};

/// VFG1 sidecar, little-endian: "VFG1", uint32 level, uint32 C, then float32
/// blocks Wz (C x 2C row-major), bz (C), Wr, br, Wh, bh, local occupancy
/// readout (C weights, 1 bias), local tsdf readout, global tsdf readout.
void write_level_params(const std::filesystem::path& path, const LevelParams& params);
LevelParams read_level_params(const std::filesystem::path& path);

/// Persistent sparse state of one level, keyed by world-aligned voxel index.
class LevelVolume {
 public:
  explicit LevelVolume(int channels = 0) : channels_(channels) {}

  int channels() const { return channels_; }
  std::size_t size() const { return coords_.size(); }
  std::optional<std::size_t> find(const Index3& global) const;

  const Index3& coord(std::size_t slot) const { return coords_[slot]; }
  std::span<const float> hidden(std::size_t slot) const {
    return {hidden_.data() + slot * static_cast<std::size_t>(channels_), static_cast<std::size_t>(channels_)};
  }
  float tsdf(std::size_t slot) const { return tsdf_[slot]; }

  /// Hidden state rows for the given coordinates; absent ones are zero.
  FeatureMatrix gather_hidden(std::span<const Index3> coords) const;

  /// Overwrites existing coordinates and inserts new ones.
  void upsert(std::span<const Index3> coords, const FeatureMatrix& hidden, std::span<const float> tsdf);

  /// Slots in (z, y, x) coordinate order.
  std::vector<std::size_t> sorted_slots() const;

  bool operator==(const LevelVolume& other) const;

 private:
  int channels_;
  std::unordered_map<Index3, std::uint32_t, Index3Hash> index_;
  std::vector<Index3> coords_;
  std::vector<float> hidden_;
  std::vector<float> tsdf_;
};

class GlobalVolume {
 public:
  explicit GlobalVolume(std::array<int, 3> channels = {24, 16, 8});

  /// Level 1 (coarsest) to 3 (finest).
  LevelVolume& level(int level) { return levels_.at(static_cast<std::size_t>(level - 1)); }
  const LevelVolume& level(int level) const { return levels_.at(static_cast<std::size_t>(level - 1)); }
  bool operator==(const GlobalVolume& other) const { return levels_ == other.levels_; }

 private:
  std::array<LevelVolume, 3> levels_;
};

/// Writes the fused state of one level's fragment voxels into the volume.
void update_global(GlobalVolume& volume, int level, std::span<const Index3> coords,
                   const FeatureMatrix& fused, std::span<const float> tsdf);

/// clamp(base + delta, -1, 1).
std::vector<float> compose_residual(std::span<const float> base, std::span<const float> delta);

enum class UpsampleMode { kNearest, kTrilinear };

/// Coarse global TSDF looked up for fine voxels (world-aligned indices).
/// Missing parents read as +1 and are counted in `missing`.
std::vector<float> upsample_tsdf(std::span<const Index3> fine_coords, const LevelVolume& coarse,
                                 UpsampleMode mode, std::size_t* missing = nullptr);

struct GlobalHeadContext {
  HeadMode mode = HeadMode::kOracle;
  double lambda = 0.48;
  bool zero_residual = false;
  const GroundTruthScene* scene = nullptr;  // oracle
  const LinearReadout* readout = nullptr;   // external
};

/// Residual added to the upsampled coarse TSDF.
///  oracle: ground truth minus base; heuristic: blend of the local TSDF with
///  the voxel's previous global TSDF, minus base; external: tanh readout.
std::vector<float> predict_residual(const FeatureMatrix& fused, std::span<const float> base,
                                    std::span<const float> local_tsdf, std::span<const Vec3> centers,
                                    std::span<const float> previous_tsdf,
                                    std::span<const std::uint8_t> has_previous,
                                    const GlobalHeadContext& ctx);

struct LevelLosses {
  double visibility = 0.0;
  double occupancy = 0.0;
  double tsdf = 0.0;
  double global_occupancy = 0.0;
  double global_tsdf = 0.0;

  double sum() const { return visibility + occupancy + tsdf + global_occupancy + global_tsdf; }
};

inline constexpr std::array<double, 3> kDefaultLossWeights = {1.0, 0.8, 0.64};

double total_loss(std::span<const LevelLosses> levels,
                  std::span<const double> weights = kDefaultLossWeights);

/// Checkpoint: for levels 1..3, uint32 count then per voxel int32 x, y, z,
/// C float32 hidden, float32 tsdf (little-endian, coordinate order).
void write_checkpoint(const std::filesystem::path& path, const GlobalVolume& volume);
GlobalVolume read_checkpoint(const std::filesystem::path& path, std::array<int, 3> channels);

}  // namespace visfuse
