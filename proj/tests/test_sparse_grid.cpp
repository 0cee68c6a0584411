#include <gtest/gtest.h>

#include "visfuse/error.hpp"
#include "visfuse/sparse_grid.hpp"

using namespace visfuse;

namespace {

VoxelGridSpec spec444() {
  VoxelGridSpec s;
  s.origin = Vec3(0.32, -0.16, 0.0);
  s.voxel_size = 0.16;
  s.dims = Index3(4, 4, 4);
  return s;
}

}  // namespace

TEST(SparseVoxelGrid, SortsAndDeduplicates) {
  const SparseVoxelGrid g(spec444(), {Index3(1, 0, 2), Index3(0, 3, 0), Index3(1, 0, 2), Index3(3, 0, 0)});
  ASSERT_EQ(g.size(), 3u);
  EXPECT_EQ(g.voxel(0), Index3(3, 0, 0));
  EXPECT_EQ(g.voxel(1), Index3(0, 3, 0));
  EXPECT_EQ(g.voxel(2), Index3(1, 0, 2));
  EXPECT_EQ(g.find(Index3(0, 3, 0)), std::optional<std::size_t>(1));
  EXPECT_FALSE(g.find(Index3(2, 2, 2)));
  EXPECT_THROW(SparseVoxelGrid(spec444(), {Index3(4, 0, 0)}), InvalidInput);
}

TEST(SparseVoxelGrid, FullGridLookupAndGlobalIndex) {
  const SparseVoxelGrid g = SparseVoxelGrid::full(spec444());
  ASSERT_EQ(g.size(), 64u);
  for (std::size_t d = 0; d < g.size(); ++d) {
    EXPECT_EQ(static_cast<std::int64_t>(d), spec444().linear_index(g.voxel(d)));
    EXPECT_EQ(g.find(g.voxel(d)), std::optional<std::size_t>(d));
  }
  EXPECT_EQ(g.global_index(0), Index3(2, -1, 0));
  const Vec3 c = g.center(0);
  EXPECT_NEAR(c.x(), (2 + 0.5) * 0.16, 1e-12);
}

TEST(SparseVoxelGrid, SubsetPreservesOrder) {
  const SparseVoxelGrid g = SparseVoxelGrid::full(spec444());
  std::vector<std::uint8_t> keep(g.size(), 0);
  keep[5] = keep[17] = keep[63] = 1;
  const SparseVoxelGrid s = g.subset(keep);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s.voxel(0), g.voxel(5));
  EXPECT_EQ(s.voxel(2), g.voxel(63));
  EXPECT_EQ(s.find(g.voxel(17)), std::optional<std::size_t>(1));
}
