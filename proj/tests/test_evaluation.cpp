#include <gtest/gtest.h>

#include <Eigen/Geometry>

#include "json.hpp"

#include "test_util.hpp"
#include "visfuse/error.hpp"
#include "visfuse/evaluation.hpp"

using namespace visfuse;

namespace {

PointCloud random_cloud(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  PointCloud pc(n);
  for (Vec3& p : pc) p = Vec3(u(rng), u(rng), u(rng));
  return pc;
}

TriangleMesh unit_square() {
  TriangleMesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0), Vec3(0, 1, 0)};
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  return m;
}

}  // namespace

TEST(Metrics, Identity) {
  std::mt19937_64 rng(1);
  const PointCloud pc = random_cloud(rng, 500);
  const ReconMetrics m = compute_metrics(pc, pc);
  EXPECT_EQ(m.acc, 0.0);
  EXPECT_EQ(m.comp, 0.0);
  EXPECT_EQ(m.chamfer, 0.0);
  EXPECT_EQ(m.prec, 1.0);
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_EQ(m.fscore, 1.0);
}

TEST(Metrics, SinglePair) {
  const PointCloud a = {Vec3(0, 0, 0)}, b = {Vec3(0.03, 0, 0)};
  const ReconMetrics m = compute_metrics(a, b, 5.0);
  EXPECT_NEAR(m.acc, 3.0, 1e-9);
  EXPECT_NEAR(m.comp, 3.0, 1e-9);
  EXPECT_NEAR(m.chamfer, 3.0, 1e-9);
  EXPECT_EQ(m.fscore, 1.0);
  const ReconMetrics tight = compute_metrics(a, b, 2.0);
  EXPECT_EQ(tight.prec, 0.0);
  EXPECT_EQ(tight.fscore, 0.0);
  EXPECT_THROW(compute_metrics(a, PointCloud{}), InvalidInput);
}

TEST(Metrics, SymmetryAndRigidInvariance) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const PointCloud a = random_cloud(rng, 300), b = random_cloud(rng, 200);
    const ReconMetrics ab = compute_metrics(a, b), ba = compute_metrics(b, a);
    EXPECT_NEAR(ab.acc, ba.comp, 1e-9);
    EXPECT_NEAR(ab.prec, ba.recall, 1e-9);
    EXPECT_NEAR(ab.chamfer, ba.chamfer, 1e-9);
    EXPECT_NEAR(ab.fscore, ba.fscore, 1e-9);

    const Eigen::Matrix3d r = Eigen::Quaterniond::UnitRandom().toRotationMatrix();
    const Vec3 shift = visfuse::testing::random_unit(rng) * 3.0;
    PointCloud ta = a, tb = b;
    for (Vec3& p : ta) p = r * p + shift;
    for (Vec3& p : tb) p = r * p + shift;
    const ReconMetrics tm = compute_metrics(ta, tb);
    EXPECT_NEAR(tm.acc, ab.acc, 1e-9);
    EXPECT_NEAR(tm.comp, ab.comp, 1e-9);
    EXPECT_NEAR(tm.fscore, ab.fscore, 1e-9);
  }
}

TEST(Metrics, MonotoneInThreshold) {
  std::mt19937_64 rng(3);
  const PointCloud a = random_cloud(rng, 400), b = random_cloud(rng, 400);
  double last_p = -1, last_r = -1;
  for (double th : {1.0, 5.0, 10.0, 20.0, 40.0, 80.0}) {
    const ReconMetrics m = compute_metrics(a, b, th);
    EXPECT_GE(m.prec, last_p);
    EXPECT_GE(m.recall, last_r);
    last_p = m.prec;
    last_r = m.recall;
  }
}

TEST(KdTree, MatchesBruteForce) {
  std::mt19937_64 rng(4);
  for (std::size_t n : {1u, 7u, 100u, 3000u}) {
    PointCloud pts = random_cloud(rng, n);
    if (n > 10) pts[5] = pts[3];  // duplicate: ties go to the lower index
    const KdTree tree(pts);
    for (const Vec3& q : random_cloud(rng, 300, 1.3)) {
      std::size_t best = 0;
      double bd = (pts[0] - q).squaredNorm();
      for (std::size_t i = 1; i < n; ++i) {
        const double d = (pts[i] - q).squaredNorm();
        if (d < bd) bd = d, best = i;
      }
      const auto [idx, d2] = tree.nearest(q);
      EXPECT_EQ(d2, bd);
      EXPECT_EQ(idx, best);
    }
    if (n > 10) EXPECT_EQ(tree.nearest(pts[5]).first, 3u);
  }
}

TEST(SampleMesh, Square) {
  const PointCloud pc = sample_mesh(unit_square(), 100.0, 7);
  EXPECT_EQ(pc.size(), 100u);  // area 0.5 * 100 per triangle, no remainder
  for (const Vec3& p : pc) {
    EXPECT_EQ(p.z(), 0.0);
    EXPECT_GE(p.x(), 0.0);
    EXPECT_LE(p.x(), 1.0);
    EXPECT_GE(p.y(), 0.0);
    EXPECT_LE(p.y(), 1.0);
  }
  EXPECT_EQ(sample_mesh(unit_square(), 100.0, 7), pc);
  EXPECT_NE(sample_mesh(unit_square(), 100.0, 8), pc);
  // Fractional expectation: 2 * 0.5 * 33 = 33 points on average.
  double total = 0;
  for (std::uint64_t s = 0; s < 400; ++s) total += static_cast<double>(sample_mesh(unit_square(), 33.0, s).size());
  EXPECT_NEAR(total / 400, 33.0, 0.1);
  TriangleMesh flat;
  flat.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)};
  flat.triangles = {{0, 1, 2}};
  EXPECT_TRUE(sample_mesh(flat, 1000.0).empty());
}

TEST(MetricsJson, Fields) {
  const PointCloud a = {Vec3(0, 0, 0)}, b = {Vec3(0.03, 0, 0)};
  const auto j = nlohmann::json::parse(metrics_to_json(compute_metrics(a, b)));
  for (const char* key : {"acc", "comp", "chamfer", "prec", "recall", "fscore", "threshold_cm"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_NEAR(j["chamfer"].get<double>(), 3.0, 1e-9);
}
