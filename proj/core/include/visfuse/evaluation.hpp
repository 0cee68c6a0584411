#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "visfuse/geometry.hpp"
#include "visfuse/surface.hpp"

namespace visfuse {

using PointCloud = std::vector<Vec3>;

/// Area-weighted surface samples: each triangle gets floor(area * density)
/// points plus one more with probability equal to the fractional part.
/// Reproducible for a given seed.
PointCloud sample_mesh(const TriangleMesh& mesh, double density, std::uint64_t seed = 0);

/// Static kd-tree for exact nearest-neighbor queries.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> points);

  std::size_t size() const { return points_.size(); }
  /// Index of and squared distance to the nearest point. Ties go to the
  /// lowest index. Requires a nonempty tree.
  std::pair<std::size_t, double> nearest(const Vec3& query) const;

 private:
  struct Node {
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    std::uint32_t begin = 0, end = 0;  // leaf range in order_
    std::uint32_t left = 0, right = 0;
  };
  std::uint32_t build(std::uint32_t begin, std::uint32_t end);
  void search(std::uint32_t node, const Vec3& q, std::size_t& best, double& best_d2) const;

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

struct ReconMetrics {
  double acc = 0.0;      // cm
  double comp = 0.0;     // cm
  double chamfer = 0.0;  // cm
  double prec = 0.0;
  double recall = 0.0;
  double fscore = 0.0;
  double threshold = 5.0;  // cm
  std::size_t pred_points = 0;
  std::size_t gt_points = 0;
};

/// Accuracy / completeness / chamfer in cm from exact nearest neighbors;
/// precision and recall count distances strictly below the threshold.
/// Points are in meters. Throws InvalidInput if either cloud is empty.
ReconMetrics compute_metrics(std::span<const Vec3> pred, std::span<const Vec3> gt,
                             double threshold_cm = 5.0);

std::string metrics_to_json(const ReconMetrics& metrics);
void write_metrics_json(const std::filesystem::path& path, const ReconMetrics& metrics);

}  // namespace visfuse
