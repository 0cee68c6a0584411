#include "visfuse/sparse_grid.hpp"

#include <algorithm>

#include "visfuse/error.hpp"

namespace visfuse {

SparseVoxelGrid::SparseVoxelGrid(const VoxelGridSpec& spec, std::vector<Index3> voxels)
    : spec_(spec), origin_index_(spec.origin_index()), voxels_(std::move(voxels)) {
  spec_.validate();
  std::sort(voxels_.begin(), voxels_.end(), Index3Less{});
  voxels_.erase(std::unique(voxels_.begin(), voxels_.end()), voxels_.end());
  for (const Index3& v : voxels_) {
    if (!spec_.contains(v)) throw InvalidInput("SparseVoxelGrid: voxel outside grid");
  }
  dense_ = static_cast<std::int64_t>(voxels_.size()) == spec_.voxel_count();
  if (!dense_) {
    lookup_.reserve(voxels_.size());
    for (std::size_t d = 0; d < voxels_.size(); ++d) {
      lookup_.emplace(voxels_[d], static_cast<std::uint32_t>(d));
    }
  }
}

SparseVoxelGrid SparseVoxelGrid::full(const VoxelGridSpec& spec) {
  spec.validate();
  std::vector<Index3> all;
  all.reserve(static_cast<std::size_t>(spec.voxel_count()));
  for (int z = 0; z < spec.dims.z(); ++z)
    for (int y = 0; y < spec.dims.y(); ++y)
      for (int x = 0; x < spec.dims.x(); ++x) all.emplace_back(x, y, z);
  return SparseVoxelGrid(spec, std::move(all));
}

std::optional<std::size_t> SparseVoxelGrid::find(const Index3& v) const {
  if (!spec_.contains(v)) return std::nullopt;
  if (dense_) return static_cast<std::size_t>(spec_.linear_index(v));
  const auto it = lookup_.find(v);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

SparseVoxelGrid SparseVoxelGrid::subset(std::span<const std::uint8_t> keep) const {
  if (keep.size() != voxels_.size()) throw InvalidInput("subset: mask size mismatch");
  std::vector<Index3> kept;
  for (std::size_t d = 0; d < voxels_.size(); ++d) {
    if (keep[d]) kept.push_back(voxels_[d]);
  }
  return SparseVoxelGrid(spec_, std::move(kept));
}

}  // namespace visfuse
