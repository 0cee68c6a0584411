#include "visfuse/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include <Eigen/Geometry>
#include <json.hpp>

#include "visfuse/error.hpp"

namespace visfuse {

namespace {

constexpr std::uint32_t kLeafSize = 8;

double canonical(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

PointCloud sample_mesh(const TriangleMesh& mesh, double density, std::uint64_t seed) {
  if (!(density > 0.0) || !std::isfinite(density)) throw InvalidInput("sample_mesh: density must be positive");
  mesh.validate();
  std::mt19937_64 rng(seed);
  PointCloud points;
  for (const auto& t : mesh.triangles) {
    const Vec3& a = mesh.vertices[static_cast<std::size_t>(t[0])];
    const Vec3& b = mesh.vertices[static_cast<std::size_t>(t[1])];
    const Vec3& c = mesh.vertices[static_cast<std::size_t>(t[2])];
    const double area = 0.5 * (b - a).cross(c - a).norm();
    const double expected = area * density;
    auto n = static_cast<std::size_t>(std::floor(expected));
    if (canonical(rng) < expected - std::floor(expected)) ++n;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = std::sqrt(canonical(rng));
      const double r = canonical(rng);
      points.push_back((1.0 - s) * a + s * (1.0 - r) * b + s * r * c);
    }
  }
  return points;
}

KdTree::KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
  for (const Vec3& p : points_) {
    if (!p.allFinite()) throw InvalidInput("KdTree: non-finite point");
  }
  order_.resize(points_.size());
  for (std::uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, static_cast<std::uint32_t>(points_.size()));
  }
}

std::uint32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.emplace_back();
  if (end - begin <= kLeafSize) {
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }
  Eigen::AlignedBox3d box;
  for (std::uint32_t i = begin; i < end; ++i) box.extend(points_[order_[i]]);
  int axis = 0;
  box.sizes().maxCoeff(&axis);
  const std::uint32_t mid = begin + (end - begin) / 2;
  auto less = [&](std::uint32_t x, std::uint32_t y) {
    const double px = points_[x][axis], py = points_[y][axis];
    return px < py || (px == py && x < y);
  };
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, less);
  const double split = points_[order_[mid]][axis];
  const std::uint32_t left = build(begin, mid);
  const std::uint32_t right = build(mid, end);
  Node& node = nodes_[id];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

void KdTree::search(std::uint32_t id, const Vec3& q, std::size_t& best, double& best_d2) const {
  const Node& node = nodes_[id];
  if (node.axis < 0) {
    for (std::uint32_t i = node.begin; i < node.end; ++i) {
      const std::uint32_t idx = order_[i];
      const double d2 = (points_[idx] - q).squaredNorm();
      if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
        best_d2 = d2;
        best = idx;
      }
    }
    return;
  }
  // Left holds coordinates <= split, right holds >= split.
  const double diff = q[node.axis] - node.split;
  const std::uint32_t near = diff < 0.0 ? node.left : node.right;
  const std::uint32_t far = diff < 0.0 ? node.right : node.left;
  search(near, q, best, best_d2);
  if (diff * diff <= best_d2) search(far, q, best, best_d2);
}

std::pair<std::size_t, double> KdTree::nearest(const Vec3& query) const {
  if (points_.empty()) throw InvalidInput("KdTree::nearest: empty tree");
  std::size_t best = std::numeric_limits<std::size_t>::max();
  double best_d2 = std::numeric_limits<double>::infinity();
  search(0, query, best, best_d2);
  return {best, best_d2};
}

ReconMetrics compute_metrics(std::span<const Vec3> pred, std::span<const Vec3> gt, double threshold_cm) {
  if (pred.empty() || gt.empty()) throw InvalidInput("compute_metrics: point clouds must be nonempty");
  if (!(threshold_cm > 0.0)) throw InvalidInput("compute_metrics: threshold must be positive");
  const KdTree gt_tree(gt);
  const KdTree pred_tree(pred);
  const double threshold_m = threshold_cm / 100.0;
  auto one_side = [&](std::span<const Vec3> from, const KdTree& to, double& mean_cm, double& within) {
    double sum = 0.0;
    std::size_t hits = 0;
    for (const Vec3& p : from) {
      const double d = std::sqrt(to.nearest(p).second);
      sum += d;
      if (d < threshold_m) ++hits;
    }
    mean_cm = 100.0 * sum / static_cast<double>(from.size());
    within = static_cast<double>(hits) / static_cast<double>(from.size());
  };
  ReconMetrics m;
  m.threshold = threshold_cm;
  m.pred_points = pred.size();
  m.gt_points = gt.size();
  one_side(pred, gt_tree, m.acc, m.prec);
  one_side(gt, pred_tree, m.comp, m.recall);
  m.chamfer = 0.5 * (m.acc + m.comp);
  m.fscore = m.prec + m.recall > 0.0 ? 2.0 * m.prec * m.recall / (m.prec + m.recall) : 0.0;
  return m;
}

std::string metrics_to_json(const ReconMetrics& m) {
  nlohmann::ordered_json j;
  j["acc"] = m.acc;
  j["comp"] = m.comp;
  j["chamfer"] = m.chamfer;
  j["prec"] = m.prec;
  j["recall"] = m.recall;
  j["fscore"] = m.fscore;
  j["threshold_cm"] = m.threshold;
  j["pred_points"] = m.pred_points;
  j["gt_points"] = m.gt_points;
  return j.dump(2) + "\n";
}

void write_metrics_json(const std::filesystem::path& path, const ReconMetrics& metrics) {
  std::ofstream out(path);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << metrics_to_json(metrics);
  if (!out) throw IoError(path.string(), "write failed");
}

}  // namespace visfuse
