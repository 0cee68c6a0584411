#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "visfuse/geometry.hpp"

namespace visfuse {

struct Index3Hash {
  std::size_t operator()(const Index3& v) const noexcept {
    std::uint64_t h = static_cast<std::uint32_t>(v.x());
    h = h * 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint32_t>(v.y());
    h = h * 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint32_t>(v.z());
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

/// Lexicographic (z, y, x) order, matching VoxelGridSpec::linear_index.
struct Index3Less {
  bool operator()(const Index3& a, const Index3& b) const noexcept {
    if (a.z() != b.z()) return a.z() < b.z();
    if (a.y() != b.y()) return a.y() < b.y();
    return a.x() < b.x();
  }
};

/// Sparse subset of a level grid. Voxels are stored as local indices of
/// `spec`, sorted and unique; payloads live in parallel arrays owned by the
/// caller and are addressed by position d in [0, size()).
class SparseVoxelGrid {
 public:
  SparseVoxelGrid() = default;
  SparseVoxelGrid(const VoxelGridSpec& spec, std::vector<Index3> voxels);

  static SparseVoxelGrid full(const VoxelGridSpec& spec);

  const VoxelGridSpec& spec() const { return spec_; }
  std::size_t size() const { return voxels_.size(); }
  bool empty() const { return voxels_.empty(); }
  std::span<const Index3> voxels() const { return voxels_; }
  const Index3& voxel(std::size_t d) const { return voxels_[d]; }
  Vec3 center(std::size_t d) const { return spec_.center(voxels_[d]); }
  Index3 global_index(std::size_t d) const { return voxels_[d] + origin_index_; }

  /// Position of a local index in the set, if present.
  std::optional<std::size_t> find(const Index3& v) const;

  /// Subset selected by a per-voxel mask, preserving order.
  SparseVoxelGrid subset(std::span<const std::uint8_t> keep) const;

 private:
  VoxelGridSpec spec_;
  Index3 origin_index_ = Index3::Zero();
  std::vector<Index3> voxels_;
  // Dense lookup when the set covers the whole grid, hash otherwise.
  bool dense_ = false;
  std::unordered_map<Index3, std::uint32_t, Index3Hash> lookup_;
};

}  // namespace visfuse
