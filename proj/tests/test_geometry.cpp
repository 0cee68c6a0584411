#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_util.hpp"
#include "visfuse/error.hpp"
#include "visfuse/geometry.hpp"

using namespace visfuse;
using visfuse::testing::small_intrinsics;

TEST(ProjectPoint, PrincipalRay) {
  const auto p = project_point(small_intrinsics(), CameraPose{}, Vec3(0, 0, 1));
  ASSERT_TRUE(p);
  EXPECT_DOUBLE_EQ(p->pixel.x(), 50.0);
  EXPECT_DOUBLE_EQ(p->pixel.y(), 50.0);
  EXPECT_DOUBLE_EQ(p->depth, 1.0);
}

TEST(ProjectPoint, OffAxisPointLandsOutsideHalfOpenImage) {
  // fx * 0.5 + cx = 100 = width, which is outside [0, width).
  EXPECT_FALSE(project_point(small_intrinsics(), CameraPose{}, Vec3(0.5, 0, 1)));
  const auto p = project_point(small_intrinsics(), CameraPose{}, Vec3(0.49, 0, 1));
  ASSERT_TRUE(p);
  EXPECT_NEAR(p->pixel.x(), 100.0 * 0.49 + 50.0, 1e-12);
  EXPECT_DOUBLE_EQ(p->pixel.y(), 50.0);
}

TEST(ProjectPoint, BehindCameraAndNaN) {
  EXPECT_FALSE(project_point(small_intrinsics(), CameraPose{}, Vec3(0, 0, -1)));
  EXPECT_THROW(project_point(small_intrinsics(), CameraPose{}, Vec3(std::nan(""), 0, 1)), InvalidInput);
}

TEST(ProjectPoint, UnprojectRoundTrip) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> px(0.0, 99.0), dz(0.1, 5.0);
  for (int i = 0; i < 2000; ++i) {
    const CameraPose pose = visfuse::testing::random_pose(rng);
    const Vec2 pixel(px(rng), px(rng));
    const double depth = dz(rng);
    const Vec3 world = unproject(small_intrinsics(), pose, pixel, depth);
    const auto p = project_point(small_intrinsics(), pose, world);
    ASSERT_TRUE(p);
    EXPECT_NEAR((p->pixel - pixel).norm(), 0.0, 1e-8);
    EXPECT_NEAR(p->depth, depth, 1e-9);
    EXPECT_LT((unproject(small_intrinsics(), pose, p->pixel, p->depth) - world).norm(), 1e-6);
  }
}

TEST(CameraIntrinsics, ScaledKeepsPixelCenters) {
  CameraIntrinsics k{500, 500, 319.5, 239.5, 640, 480};
  const CameraIntrinsics s = k.scaled(1.0 / 16);
  EXPECT_EQ(s.width, 40);
  EXPECT_EQ(s.height, 30);
  EXPECT_DOUBLE_EQ(s.cx, 19.5);
  EXPECT_DOUBLE_EQ(s.cy, 14.5);
  EXPECT_DOUBLE_EQ(s.fx, 500.0 / 16);
  // A point projecting to the center of full-res pixel block (16u..16u+15)
  // lands on coarse pixel u.
  const Vec3 p = unproject(k, CameraPose{}, Vec2(16 * 7 + 7.5, 16 * 3 + 7.5), 2.0);
  const auto q = project_point(s, CameraPose{}, p);
  ASSERT_TRUE(q);
  EXPECT_NEAR(q->pixel.x(), 7.0, 1e-12);
  EXPECT_NEAR(q->pixel.y(), 3.0, 1e-12);
}

TEST(CameraPose, ValidateAndLookAt) {
  CameraPose bad;
  bad.rotation(0, 0) = 2.0;
  EXPECT_THROW(bad.validate(), InvalidInput);
  const CameraPose pose = CameraPose::look_at(Vec3(1, 2, 3), Vec3(4, 2, 3), Vec3::UnitZ());
  EXPECT_NO_THROW(pose.validate());
  const auto p = project_point(small_intrinsics(), pose, Vec3(5, 2, 3));
  ASSERT_TRUE(p);
  EXPECT_NEAR(p->pixel.x(), 50.0, 1e-12);
  EXPECT_NEAR(p->pixel.y(), 50.0, 1e-12);
  // World up appears towards smaller image y.
  const auto up = project_point(small_intrinsics(), pose, Vec3(5, 2, 3.5));
  ASSERT_TRUE(up);
  EXPECT_LT(up->pixel.y(), 50.0);
  const Mat4 c2w = pose.camera_to_world();
  const CameraPose back = CameraPose::from_camera_to_world(c2w);
  EXPECT_TRUE(back.rotation.isApprox(pose.rotation, 1e-12));
  EXPECT_TRUE(back.translation.isApprox(pose.translation, 1e-12));
}

namespace {

FeatureMap random_map(std::mt19937_64& rng, int h, int w, int c) {
  FeatureMap m(h, w, c);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (float& v : m.data) v = u(rng);
  return m;
}

}  // namespace

TEST(BilinearSample, NodeMidpointConstant) {
  std::mt19937_64 rng(3);
  const FeatureMap m = random_map(rng, 10, 12, 4);
  const auto node = bilinear_sample(m, Vec2(3, 7));
  for (int c = 0; c < 4; ++c) EXPECT_FLOAT_EQ(node[c], m.at(7, 3)[c]);
  const auto mid = bilinear_sample(m, Vec2(3.5, 7));
  for (int c = 0; c < 4; ++c) EXPECT_NEAR(mid[c], 0.5f * (m.at(7, 3)[c] + m.at(7, 4)[c]), 1e-6);
  const FeatureMap k(5, 5, 3, 0.25f);
  const auto v = bilinear_sample(k, Vec2(1.3, 3.9));
  for (float x : v) EXPECT_FLOAT_EQ(x, 0.25f);
}

TEST(BilinearSample, MatchesFormula) {
  std::mt19937_64 rng(4);
  const FeatureMap m = random_map(rng, 9, 11, 3);
  std::uniform_real_distribution<double> ux(0.0, 10.0), uy(0.0, 8.0);
  for (int i = 0; i < 500; ++i) {
    const double x = ux(rng), y = uy(rng);
    const int x0 = std::min(static_cast<int>(x), 9), y0 = std::min(static_cast<int>(y), 7);
    const double fx = x - x0, fy = y - y0;
    const auto got = bilinear_sample(m, Vec2(x, y));
    for (int c = 0; c < 3; ++c) {
      const double want = (1 - fx) * (1 - fy) * m.at(y0, x0)[c] + fx * (1 - fy) * m.at(y0, x0 + 1)[c] +
                          (1 - fx) * fy * m.at(y0 + 1, x0)[c] + fx * fy * m.at(y0 + 1, x0 + 1)[c];
      EXPECT_NEAR(got[c], want, 1e-5);
    }
  }
}

TEST(BilinearSample, OutOfBounds) {
  const FeatureMap m(4, 4, 2, 1.0f);
  EXPECT_THROW(bilinear_sample(m, Vec2(3.01, 1)), OutOfBounds);
  EXPECT_THROW(bilinear_sample(m, Vec2(-0.01, 1)), OutOfBounds);
  EXPECT_NO_THROW(bilinear_sample(m, Vec2(3, 3)));
}

TEST(ComputeFbv, SingleCameraEnclosesFrustum) {
  const Camera cam = visfuse::testing::identity_camera();
  const VoxelGridSpec g = compute_fbv(std::span(&cam, 1), 3.0, 0.16);
  const Vec3 lo = g.origin;
  const Vec3 hi = g.origin + g.dims.cast<double>() * g.voxel_size;
  EXPECT_LE(lo.x(), -1.5);
  EXPECT_LE(lo.y(), -1.5);
  EXPECT_LE(lo.z(), 0.0);
  EXPECT_GE(hi.x(), 1.5);
  EXPECT_GE(hi.y(), 1.5);
  EXPECT_GE(hi.z(), 3.0);
  // Padding is exactly one voxel beyond the snapped bounds.
  EXPECT_NEAR(lo.z(), -0.16, 1e-12);
  for (int a = 0; a < 3; ++a) {
    const double k = g.origin[a] / g.voxel_size;
    EXPECT_NEAR(k, std::round(k), 1e-9);
  }
  EXPECT_THROW(compute_fbv(std::span<const Camera>{}, 3.0, 0.16), InvalidInput);
}

TEST(ComputeFbv, UnionMonotoneAndIdempotent) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Camera> cams;
    for (int i = 0; i < 5; ++i) cams.push_back({small_intrinsics(), visfuse::testing::random_pose(rng)});
    const VoxelGridSpec all = compute_fbv(cams, 3.0, 0.16);
    const VoxelGridSpec sub = compute_fbv(std::span(cams).first(2), 3.0, 0.16);
    const Vec3 all_hi = all.origin + all.dims.cast<double>() * all.voxel_size;
    const Vec3 sub_hi = sub.origin + sub.dims.cast<double>() * sub.voxel_size;
    EXPECT_TRUE((all.origin.array() <= sub.origin.array() + 1e-12).all());
    EXPECT_TRUE((all_hi.array() >= sub_hi.array() - 1e-12).all());
    std::vector<Camera> twice = {cams[0], cams[0]};
    const VoxelGridSpec one = compute_fbv(std::span(cams).first(1), 3.0, 0.16);
    const VoxelGridSpec two = compute_fbv(twice, 3.0, 0.16);
    EXPECT_EQ(one.origin, two.origin);
    EXPECT_EQ(one.dims, two.dims);
  }
}

TEST(ComputeFbv, LevelsNest) {
  const Camera cam = visfuse::testing::identity_camera();
  const VoxelGridSpec l1 = compute_fbv(std::span(&cam, 1), 3.0, 0.16);
  const VoxelGridSpec l2 = l1.refined();
  const VoxelGridSpec l3 = l2.refined();
  EXPECT_EQ(l3.dims, l1.dims * 4);
  EXPECT_DOUBLE_EQ(l3.voxel_size, 0.04);
  EXPECT_EQ(l2.origin_index(), l1.origin_index() * 2);
  for (int i = 0; i < 200; ++i) {
    const Index3 child(i % l2.dims.x(), (i * 7) % l2.dims.y(), (i * 13) % l2.dims.z());
    const Index3 parent(child.x() / 2, child.y() / 2, child.z() / 2);
    const Vec3 c = l2.center(child);
    const Vec3 lo = l1.origin + parent.cast<double>() * l1.voxel_size;
    EXPECT_TRUE((c.array() > lo.array()).all());
    EXPECT_TRUE((c.array() < lo.array() + l1.voxel_size).all());
  }
}

TEST(TraverseRay, AxisAlignedExample) {
  VoxelGridSpec g;
  g.voxel_size = 1.0;
  g.dims = Index3(4, 1, 1);
  const auto v = traverse_ray(g, Ray{Vec3(-0.5, 0.5, 0.5), Vec3::UnitX(), 0.0, 10.0});
  ASSERT_EQ(v.size(), 4u);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(v[static_cast<std::size_t>(i)], Index3(i, 0, 0));
}

TEST(TraverseRay, ParallelOutsideIsEmpty) {
  VoxelGridSpec g;
  g.voxel_size = 1.0;
  g.dims = Index3(4, 4, 4);
  EXPECT_TRUE(traverse_ray(g, Ray{Vec3(-1, 5.5, 0.5), Vec3::UnitX(), 0.0, 10.0}).empty());
}

TEST(TraverseRay, ReversalReversesOrder) {
  std::mt19937_64 rng(5);
  VoxelGridSpec g;
  g.origin = Vec3(-1, -1, -1);
  g.voxel_size = 0.25;
  g.dims = Index3(8, 8, 8);
  for (int i = 0; i < 500; ++i) {
    const Vec3 o = 0.8 * visfuse::testing::random_unit(rng);
    const Vec3 d = visfuse::testing::random_unit(rng);
    const double len = 1.5;
    const auto fwd = traverse_ray(g, Ray{o, d, 0.0, len});
    auto bwd = traverse_ray(g, Ray{o + len * d, -d, 0.0, len});
    std::reverse(bwd.begin(), bwd.end());
    EXPECT_EQ(fwd, bwd);
  }
}

TEST(TraverseRay, MatchesBruteForceIncludingTies) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> dim(1, 7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> lattice(-2, 8);
  for (int i = 0; i < 2000; ++i) {
    VoxelGridSpec g;
    g.voxel_size = 0.5;
    g.origin = Vec3(-1.0, -0.5, 0.0);
    g.dims = Index3(dim(rng), dim(rng), dim(rng));
    Ray r;
    if (i % 3 == 0) {
      // Lattice-point origins and integer directions hit edges and corners exactly.
      r.origin = g.origin + Vec3(lattice(rng), lattice(rng), lattice(rng)) * g.voxel_size;
      Vec3 d(lattice(rng) % 3, lattice(rng) % 3, lattice(rng) % 3);
      if (d.isZero()) d = Vec3::UnitX();
      r.direction = d.normalized();
    } else {
      r.origin = Vec3(u(rng) * 3, u(rng) * 3, u(rng) * 3);
      r.direction = visfuse::testing::random_unit(rng);
    }
    r.t_min = 0.0;
    r.t_max = 8.0;
    EXPECT_EQ(traverse_ray(g, r), oracle::traverse_brute_force(g, r)) << "ray " << i;
  }
}
