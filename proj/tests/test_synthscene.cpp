#include <cmath>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "visfuse/error.hpp"
#include "visfuse/synthscene.hpp"

using namespace visfuse;

namespace {

double cosine(std::span<const float> a, std::span<const float> b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += double(a[i]) * b[i];
    na += double(a[i]) * a[i];
    nb += double(b[i]) * b[i];
  }
  return dot / std::sqrt(na * nb);
}

std::vector<float> descriptor_at(const GroundTruthScene& scene, const Camera& cam, const Vec3& point,
                                 int channels) {
  const FeatureMap map = synth_features(scene, cam.intrinsics, cam.pose, channels);
  const auto p = project_point(cam.intrinsics, cam.pose, point);
  EXPECT_TRUE(p);
  const int u = static_cast<int>(std::lround(p->pixel.x()));
  const int v = static_cast<int>(std::lround(p->pixel.y()));
  const auto s = map.at(v, u);
  return {s.begin(), s.end()};
}

}  // namespace

TEST(SceneSdf, Examples) {
  EXPECT_DOUBLE_EQ(shape_sdf(Sphere{Vec3::Zero(), 0.5}, Vec3(0.5, 0, 0)), 0.0);
  EXPECT_DOUBLE_EQ(shape_sdf(Sphere{Vec3::Zero(), 0.5}, Vec3::Zero()), -0.5);
  EXPECT_DOUBLE_EQ(shape_sdf(Box{}, Vec3(2, 0, 0)), 1.0);
  EXPECT_NEAR(shape_sdf(Box{}, Vec3(2, 2, 0)), std::sqrt(2.0), 1e-12);
  EXPECT_DOUBLE_EQ(shape_sdf(Box{}, Vec3(0.5, 0, 0)), -0.5);
  Box room;
  room.inside_out = true;
  EXPECT_DOUBLE_EQ(shape_sdf(room, Vec3(0.5, 0, 0)), 0.5);
  EXPECT_NEAR(shape_sdf(Capsule{Vec3::Zero(), Vec3::UnitZ(), 0.1}, Vec3(1, 0, 0.5)), 0.9, 1e-12);
  EXPECT_NEAR(shape_sdf(Plane{Vec3::UnitZ(), 0.0}, Vec3(3, 4, 2)), 2.0, 1e-12);
}

TEST(SceneSdf, UnionIsMinimum) {
  GroundTruthScene scene;
  scene.add(Sphere{Vec3::Zero(), 0.5}, "a");
  scene.add(Sphere{Vec3(3, 0, 0), 1.0}, "b");
  EXPECT_NEAR(scene.sdf(Vec3(1.5, 0, 0)), 0.5, 1e-12);
  EXPECT_EQ(scene.nearest(Vec3(2.5, 0, 0)), 1u);
  EXPECT_EQ(scene.find_tag("b"), std::optional<std::size_t>(1));
  EXPECT_FALSE(scene.find_tag("c"));
}

TEST(RenderDepth, SphereHitAndMiss) {
  GroundTruthScene scene;
  scene.add(Sphere{Vec3::Zero(), 0.5});
  const auto k = visfuse::testing::small_intrinsics();
  const CameraPose pose = CameraPose::look_at(Vec3(-2, 0, 0), Vec3::Zero(), Vec3::UnitZ());
  const auto depth = render_depth(scene, k, pose);
  EXPECT_NEAR(depth[50 * 100 + 50], 1.5, 1e-4);
  EXPECT_EQ(depth[0], 0.0f);  // corner ray misses
  for (int v = 0; v < 100; v += 7) {
    for (int u = 0; u < 100; u += 7) {
      const float d = depth[static_cast<std::size_t>(v) * 100 + u];
      if (d <= 0.0f) continue;
      EXPECT_LT(std::abs(scene.sdf(unproject(k, pose, Vec2(u, v), d))), 1e-4);
    }
  }
}

TEST(GtTsdf, Examples) {
  GroundTruthScene scene;
  scene.add(Plane{Vec3::UnitZ(), 0.0});
  const double lambda = 0.48;
  const std::vector<Vec3> pts = {Vec3(0, 0, 0), Vec3(0, 0, -2 * lambda), Vec3(0, 0, lambda / 2)};
  const Tsdf t = gt_tsdf(scene, pts, lambda);
  EXPECT_EQ(t.tsdf[0], 0.0f);
  EXPECT_EQ(t.occupied[0], 1);
  EXPECT_EQ(t.tsdf[1], -1.0f);
  EXPECT_EQ(t.occupied[1], 0);
  EXPECT_FLOAT_EQ(t.tsdf[2], 0.5f);
  EXPECT_EQ(t.occupied[2], 1);
}

TEST(SynthFeatures, MultiViewConsistency) {
  GroundTruthScene scene;
  scene.add(Sphere{Vec3::Zero(), 0.5});
  scene.add(Sphere{Vec3(-1.0, 0, 0), 0.2}, "occluder");
  const auto k = visfuse::testing::small_intrinsics();
  const Camera a{k, CameraPose::look_at(Vec3(0.3, -2, 0.4), Vec3::Zero(), Vec3::UnitZ())};
  const Camera b{k, CameraPose::look_at(Vec3(-0.3, -2, 0.1), Vec3::Zero(), Vec3::UnitZ())};
  const Vec3 point = Vec3(0, -0.5, 0);
  const auto da = descriptor_at(scene, a, point, 16);
  const auto db = descriptor_at(scene, b, point, 16);
  EXPECT_GT(cosine(da, db), 0.99);

  const FeatureMap map = synth_features(scene, k, a.pose, 16);
  EXPECT_LT(cosine(map.at(50, 50), map.at(0, 0)), 0.1);

  // Seen from -x, the point (-0.5,0,0) hides behind the occluder.
  const Vec3 hidden(-0.5, 0, 0);
  const Camera open{k, CameraPose::look_at(Vec3(-2, -1.2, 0), hidden, Vec3::UnitZ())};
  const Camera blocked{k, CameraPose::look_at(Vec3(-2.5, 0, 0), hidden, Vec3::UnitZ())};
  std::vector<float> truth(16);
  const Vec3 n = hidden.normalized();
  surface_descriptor(&hidden, n, truth);
  EXPECT_GT(cosine(descriptor_at(scene, open, hidden, 16), truth), 0.99);
  EXPECT_LT(cosine(descriptor_at(scene, blocked, hidden, 16), truth), 0.9);
}

TEST(SceneFormat, RoundTrip) {
  for (const char* name : {"room", "sphere-orbit", "two-planes"}) {
    const SceneDescription a = canonical_scene(name);
    const SceneDescription b = parse_scene(format_scene(a));
    ASSERT_EQ(a.scene.primitives().size(), b.scene.primitives().size());
    EXPECT_EQ(a.intrinsics.width, b.intrinsics.width);
    EXPECT_EQ(a.trajectory.count, b.trajectory.count);
    const auto pa = a.trajectory.poses();
    const auto pb = b.trajectory.poses();
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
      EXPECT_TRUE(pa[i].rotation.isApprox(pb[i].rotation, 1e-12));
      EXPECT_LT((pa[i].translation - pb[i].translation).norm(), 1e-12);
    }
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int i = 0; i < 100; ++i) {
      const Vec3 p(u(rng), u(rng), u(rng) + 1.0);
      EXPECT_DOUBLE_EQ(a.scene.sdf(p), b.scene.sdf(p));
    }
  }
  EXPECT_THROW(parse_scene("sphere radius=abc\n"), Error);
  EXPECT_THROW(canonical_scene("nope"), InvalidInput);
}

TEST(CanonicalScenes, RoomLayout) {
  const SceneDescription room = canonical_scene("room");
  EXPECT_EQ(room.trajectory.count, 40);
  const auto& prims = room.scene.primitives();
  const auto sphere = std::get<Sphere>(prims[*room.scene.find_tag("sphere")].shape);
  const auto pole = std::get<Capsule>(prims[*room.scene.find_tag("pole")].shape);
  EXPECT_DOUBLE_EQ(sphere.radius, 0.5);
  EXPECT_DOUBLE_EQ(pole.radius, 0.04);
  // Primitives do not touch each other, so the union distance is exact.
  const Box& box = std::get<Box>(prims[*room.scene.find_tag("room")].shape);
  EXPECT_GT(shape_sdf(box, sphere.center), sphere.radius);
  EXPECT_GT(shape_sdf(box, pole.a), pole.radius);
  EXPECT_GT((sphere.center.head<2>() - pole.a.head<2>()).norm(), sphere.radius + pole.radius);
  // Cameras are in free space.
  for (const CameraPose& p : room.trajectory.poses()) EXPECT_GT(room.scene.sdf(p.camera_center()), 0.3);
}

TEST(VisibleSurfaceSamples, OnSurfaceAndThinned) {
  const SceneDescription s = canonical_scene("sphere-orbit");
  std::vector<Camera> cams;
  for (const CameraPose& p : s.trajectory.poses()) cams.push_back({s.intrinsics.scaled(0.25), p});
  const auto pts = visible_surface_samples(s.scene, cams, 3.0, 0.02);
  ASSERT_GT(pts.size(), 500u);
  for (const Vec3& p : pts) EXPECT_LT(std::abs(s.scene.sdf(p)), 1e-4);
}
