#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "visfuse/geometry.hpp"
#include "visfuse/sparse_grid.hpp"

namespace visfuse {

/// Occupancy window along one ray. `start` is 0-based: the window covers
/// voxels [start, start + length).
struct WindowSelection {
  std::size_t start = 0;
  std::size_t length = 0;
  double sum = 0.0;
};

enum class WindowCount {
  kAllFull,        // R - K + 1 candidate windows
  kExcludeLast,    // R - K candidates, compatibility with the shorter range
};

/// Window of K consecutive voxels with the largest occupancy sum; ties go to
/// the earliest window. Rays no longer than K yield the single full window.
WindowSelection select_window(std::span<const float> occupancy, int window,
                              WindowCount count = WindowCount::kAllFull);

/// Voxels of a sparse level grid crossed by per-pixel rays, in traversal
/// order, stored compactly (CSR).
class RayBundle {
 public:
  struct RayInfo {
    int view = 0;
    int u = 0;
    int v = 0;
  };

  std::size_t size() const { return rays_.size(); }
  const RayInfo& info(std::size_t r) const { return rays_[r]; }
  std::span<const std::uint32_t> voxels(std::size_t r) const {
    return {voxels_.data() + offsets_[r], offsets_[r + 1] - offsets_[r]};
  }
  /// Camera-frame depth of each voxel center along ray r.
  std::span<const float> depths(std::size_t r) const {
    return {depths_.data() + offsets_[r], offsets_[r + 1] - offsets_[r]};
  }
  int stride() const { return stride_; }

  friend RayBundle cast_rays(const SparseVoxelGrid& grid, std::span<const Camera> cameras,
                             int stride, double d_max);
  friend RayBundle subset_rays(const RayBundle& bundle, std::span<const std::size_t> rays);

 private:
  std::vector<RayInfo> rays_;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::uint32_t> voxels_;
  std::vector<float> depths_;
  int stride_ = 1;
};

/// One ray per `stride`-th pixel of every view, from the camera center to
/// depth d_max, truncated where it leaves the grid. Rays are listed view by
/// view in row-major pixel order.
RayBundle cast_rays(const SparseVoxelGrid& grid, std::span<const Camera> cameras, int stride,
                    double d_max);

/// Bundle restricted to the listed rays.
RayBundle subset_rays(const RayBundle& bundle, std::span<const std::size_t> rays);

using KeepMask = std::vector<std::uint8_t>;

struct SlidingWindowOptions {
  int window = 9;
  WindowCount count = WindowCount::kAllFull;
};

/// Union over rays of each ray's selected occupancy window.
KeepMask sparsify_fragment(std::size_t voxel_count, std::span<const float> occupancy,
                           const RayBundle& rays, const SlidingWindowOptions& options = {});

/// Same, casting the rays first.
KeepMask sparsify_fragment(const SparseVoxelGrid& grid, std::span<const float> occupancy,
                           std::span<const Camera> cameras, int window, int stride, double d_max);

/// Per ray, the `window` most occupied voxels (ties to the nearer voxel).
KeepMask topk_sparsify(std::size_t voxel_count, std::span<const float> occupancy,
                       const RayBundle& rays, int window);

/// Keeps voxels with occupancy strictly above theta.
KeepMask threshold_sparsify(std::span<const float> occupancy, double theta);

/// Children (2 * parent + {0,1}^3) of every kept voxel, on the next level.
SparseVoxelGrid upsample_voxels(const SparseVoxelGrid& coarse, std::span<const std::uint8_t> kept,
                                const VoxelGridSpec& fine);

/// Debug dump: one "x y z" local index triple per kept voxel.
void write_kept_voxels(const std::filesystem::path& path, const SparseVoxelGrid& grid,
                       std::span<const std::uint8_t> kept);

}  // namespace visfuse
