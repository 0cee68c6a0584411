#include "visfuse/local_fusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "visfuse/binary_io.hpp"
#include "visfuse/error.hpp"

namespace visfuse {

namespace {

void normalize_row(std::span<float> row) {
  double sum = 0.0;
  for (float v : row) sum += v;
  if (sum <= 0.0) {
    std::fill(row.begin(), row.end(), 0.0f);
    return;
  }
  for (float& v : row) v = static_cast<float>(v / sum);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double log_scale(double x) {
  const double m = std::log1p(std::abs(x));
  return x < 0.0 ? -m : m;
}

}  // namespace

VisibilityWeights VisibilityWeights::normalized() const {
  VisibilityWeights out = *this;
  for (std::size_t d = 0; d < voxels; ++d) {
    normalize_row({out.w.data() + d * static_cast<std::size_t>(views), static_cast<std::size_t>(views)});
  }
  return out;
}

FeatureVolume backproject_features(const SparseVoxelGrid& grid, std::span<const FeatureMap> maps,
                                   std::span<const Camera> cameras, int expected_views) {
  if (static_cast<int>(cameras.size()) != expected_views || maps.size() != cameras.size()) {
    throw InvalidInput("backproject_features: expected " + std::to_string(expected_views) +
                       " cameras and feature maps");
  }
  if (maps.empty()) throw InvalidInput("backproject_features: no views");
  const int channels = maps.front().channels;
  for (std::size_t n = 0; n < maps.size(); ++n) {
    if (maps[n].channels != channels) throw InvalidInput("backproject_features: channel mismatch");
    if (maps[n].width != cameras[n].intrinsics.width || maps[n].height != cameras[n].intrinsics.height) {
      throw InvalidInput("backproject_features: feature map does not match level intrinsics");
    }
  }
  const int views = expected_views;
  FeatureVolume fv(grid.size(), views, channels);
  for (std::size_t d = 0; d < grid.size(); ++d) {
    const Vec3 center = grid.center(d);
    for (int n = 0; n < views; ++n) {
      const Camera& cam = cameras[static_cast<std::size_t>(n)];
      const auto proj = project_point(cam.intrinsics, cam.pose, center);
      if (!proj) continue;
      const FeatureMap& map = maps[static_cast<std::size_t>(n)];
      if (proj->pixel.x() > map.width - 1 || proj->pixel.y() > map.height - 1) continue;
      bilinear_sample(map, proj->pixel, fv.at(d, n));
      fv.valid[d * static_cast<std::size_t>(views) + static_cast<std::size_t>(n)] = 1;
    }
  }
  return fv;
}

SimilarityVolume pairwise_similarity(const FeatureVolume& fv) {
  SimilarityVolume sv;
  sv.voxels = fv.voxels;
  sv.views = fv.views;
  const auto pairs = static_cast<std::size_t>(sv.pairs());
  sv.flat.assign(fv.voxels * pairs, 0.0f);
  sv.pair_valid.assign(fv.voxels * pairs, 0);
  sv.view_valid = fv.valid;
  std::vector<double> norms(static_cast<std::size_t>(fv.views));
  for (std::size_t d = 0; d < fv.voxels; ++d) {
    for (int n = 0; n < fv.views; ++n) {
      double s = 0.0;
      if (fv.is_valid(d, n)) {
        for (float v : fv.at(d, n)) s += static_cast<double>(v) * v;
      }
      norms[static_cast<std::size_t>(n)] = std::sqrt(s);
    }
    const std::size_t row = d * pairs;
    for (int m = 0; m < fv.views; ++m) {
      if (!fv.is_valid(d, m) || norms[static_cast<std::size_t>(m)] == 0.0) continue;
      const auto fm = fv.at(d, m);
      for (int n = m + 1; n < fv.views; ++n) {
        if (!fv.is_valid(d, n) || norms[static_cast<std::size_t>(n)] == 0.0) continue;
        const auto fn = fv.at(d, n);
        double dot = 0.0;
        for (int c = 0; c < fv.channels; ++c) dot += static_cast<double>(fm[c]) * fn[c];
        const double cosine = std::clamp(
            dot / (norms[static_cast<std::size_t>(m)] * norms[static_cast<std::size_t>(n)]), -1.0, 1.0);
        const auto mn = row + static_cast<std::size_t>(SimilarityVolume::pair_index(m, n, fv.views));
        const auto nm = row + static_cast<std::size_t>(SimilarityVolume::pair_index(n, m, fv.views));
        sv.flat[mn] = sv.flat[nm] = static_cast<float>(cosine);
        sv.pair_valid[mn] = sv.pair_valid[nm] = 1;
      }
    }
  }
  return sv;
}

PredictorMode parse_predictor_mode(std::string_view name, std::string_view field) {
  if (name == "oracle") return PredictorMode::kOracle;
  if (name == "heuristic") return PredictorMode::kHeuristic;
  if (name == "external") return PredictorMode::kExternal;
  throw ConfigError(std::string(field), "unknown mode '" + std::string(name) + "'");
}

std::string_view to_string(PredictorMode mode) {
  switch (mode) {
    case PredictorMode::kOracle:
      return "oracle";
    case PredictorMode::kHeuristic:
      return "heuristic";
    case PredictorMode::kExternal:
      return "external";
  }
  return "unknown";
}

std::vector<float> view_agreement_scores(const SimilarityVolume& sv) {
  const int views = sv.views;
  std::vector<float> scores(sv.voxels * static_cast<std::size_t>(views), 0.0f);
  for (std::size_t d = 0; d < sv.voxels; ++d) {
    for (int n = 0; n < views; ++n) {
      double sum = 0.0;
      int count = 0;
      for (int m = 0; m < views; ++m) {
        if (m == n || !sv.valid_pair(d, n, m)) continue;
        sum += std::max(0.0f, sv.at(d, n, m));
        ++count;
      }
      scores[d * static_cast<std::size_t>(views) + static_cast<std::size_t>(n)] =
          count > 0 ? static_cast<float>(sum / count) : 0.0f;
    }
  }
  return scores;
}

VisibilityWeights OracleVisibility::predict(const SimilarityVolume& sv) const {
  if (binary_.voxels != sv.voxels || binary_.views != sv.views) {
    throw InvalidInput("oracle visibility: shape mismatch");
  }
  VisibilityWeights w = binary_;
  for (std::size_t i = 0; i < w.w.size(); ++i) {
    if (!sv.view_valid[i]) w.w[i] = 0.0f;
  }
  return w.normalized();
}

VisibilityWeights HeuristicVisibility::predict(const SimilarityVolume& sv) const {
  VisibilityWeights w(sv.voxels, sv.views);
  w.w = view_agreement_scores(sv);
  for (float& v : w.w) {
    if (!(v > tau_)) v = 0.0f;
  }
  return w.normalized();
}

ExternalVisibility ExternalVisibility::from_file(const std::filesystem::path& path, int expected_level) {
  int level = 0;
  VisibilityWeights w = read_visibility_sidecar(path, &level);
  if (level != expected_level) {
    throw IoError(path.string(), "sidecar is for level " + std::to_string(level) + ", expected " +
                                     std::to_string(expected_level));
  }
  return ExternalVisibility(std::move(w));
}

VisibilityWeights ExternalVisibility::predict(const SimilarityVolume& sv) const {
  if (weights_.voxels != sv.voxels || weights_.views != sv.views) {
    throw InvalidInput("external visibility: sidecar shape does not match the volume");
  }
  VisibilityWeights w = weights_;
  for (std::size_t i = 0; i < w.w.size(); ++i) {
    if (!sv.view_valid[i] || !(w.w[i] > 0.0f)) w.w[i] = 0.0f;
  }
  return w.normalized();
}

VisibilityWeights predict_visibility(const SimilarityVolume& sv, const VisibilityPredictor& predictor) {
  return predictor.predict(sv);
}

void write_visibility_sidecar(const std::filesystem::path& path, int level, const VisibilityWeights& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot write");
  io::write_magic(out, "VFW1");
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(level));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.voxels));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.views));
  for (float v : w.w) io::write_le<float>(out, v);
  if (!out) throw IoError(path.string(), "write failed");
}

VisibilityWeights read_visibility_sidecar(const std::filesystem::path& path, int* level) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open");
  io::expect_magic(in, "VFW1", path.string());
  const auto lvl = io::read_le<std::uint32_t>(in);
  const auto d = io::read_le<std::uint32_t>(in);
  const auto n = io::read_le<std::uint32_t>(in);
  if (!in) throw IoError(path.string(), "truncated header");
  VisibilityWeights w(d, static_cast<int>(n));
  for (float& v : w.w) v = io::read_le<float>(in);
  if (!in) throw IoError(path.string(), "truncated weights");
  if (level) *level = static_cast<int>(lvl);
  return w;
}

FeatureMatrix fuse_features(const FeatureVolume& fv, const VisibilityWeights& w) {
  if (w.voxels != fv.voxels || w.views != fv.views) throw InvalidInput("fuse_features: shape mismatch");
  FeatureMatrix fused = FeatureMatrix::Zero(static_cast<Eigen::Index>(fv.voxels), fv.channels);
  for (std::size_t d = 0; d < fv.voxels; ++d) {
    float* out = fused.row(static_cast<Eigen::Index>(d)).data();
    for (int n = 0; n < fv.views; ++n) {
      const float weight = w.at(d, n);
      if (weight == 0.0f) continue;
      const auto f = fv.at(d, n);
      for (int c = 0; c < fv.channels; ++c) out[c] += weight * f[c];
    }
  }
  return fused;
}

namespace {

LocalPrediction oracle_heads(const SparseVoxelGrid& grid, const LocalHeadContext& ctx) {
  if (ctx.scene == nullptr) throw ConfigError("head", "oracle mode requires a ground-truth scene");
  std::vector<Vec3> centers(grid.size());
  for (std::size_t d = 0; d < grid.size(); ++d) centers[d] = grid.center(d);
  Tsdf gt = gt_tsdf(*ctx.scene, centers, ctx.lambda);
  LocalPrediction out;
  out.tsdf = std::move(gt.tsdf);
  out.occupancy.assign(gt.occupied.begin(), gt.occupied.end());
  return out;
}

LocalPrediction heuristic_heads(const VisibilityWeights& w, const SimilarityVolume& sv,
                                const SparseVoxelGrid& grid, std::span<const Camera> cameras,
                                const LocalHeadContext& ctx) {
  if (ctx.rays == nullptr) throw ConfigError("head", "heuristic mode requires the level ray bundle");
  const std::size_t voxels = grid.size();
  LocalPrediction out;
  out.occupancy.resize(voxels);
  out.tsdf.assign(voxels, 1.0f);

  const std::vector<float> scores = view_agreement_scores(sv);
  for (std::size_t d = 0; d < voxels; ++d) {
    double agreement = 0.0;
    for (int n = 0; n < w.views; ++n) {
      agreement += static_cast<double>(w.at(d, n)) * scores[d * static_cast<std::size_t>(w.views) + static_cast<std::size_t>(n)];
    }
    out.occupancy[d] = static_cast<float>(
        sigmoid(ctx.heuristic.logistic_a * (agreement - ctx.heuristic.logistic_b)));
  }

  // Depth per sampled pixel: occupancy-weighted mean depth of the ray's
  // selected window.
  const RayBundle& rays = *ctx.rays;
  const int stride = rays.stride();
  std::vector<std::vector<float>> depth(cameras.size());
  for (std::size_t n = 0; n < cameras.size(); ++n) {
    depth[n].assign(static_cast<std::size_t>(cameras[n].intrinsics.width) * cameras[n].intrinsics.height, 0.0f);
  }
  std::vector<float> along;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const auto vox = rays.voxels(r);
    if (vox.empty()) continue;
    const auto z = rays.depths(r);
    along.resize(vox.size());
    for (std::size_t i = 0; i < vox.size(); ++i) along[i] = out.occupancy[vox[i]];
    const WindowSelection win = select_window(along, ctx.window);
    double mass = 0.0;
    double acc = 0.0;
    for (std::size_t i = win.start; i < win.start + win.length; ++i) {
      mass += along[i];
      acc += static_cast<double>(along[i]) * z[i];
    }
    if (mass <= 1e-6) continue;
    const auto& info = rays.info(r);
    const auto& intr = cameras[static_cast<std::size_t>(info.view)].intrinsics;
    depth[static_cast<std::size_t>(info.view)][static_cast<std::size_t>(info.v) * intr.width + info.u] =
        static_cast<float>(acc / mass);
  }

  // Projective TSDF fusion of the per-view depth estimates.
  const double lambda = ctx.lambda;
  for (std::size_t d = 0; d < voxels; ++d) {
    const Vec3 center = grid.center(d);
    double acc = 0.0;
    int count = 0;
    for (std::size_t n = 0; n < cameras.size(); ++n) {
      const auto proj = project_point(cameras[n].intrinsics, cameras[n].pose, center);
      if (!proj) continue;
      const auto& intr = cameras[n].intrinsics;
      const int last_u = (intr.width - 1) / stride * stride;
      const int last_v = (intr.height - 1) / stride * stride;
      const int u = std::min(last_u, static_cast<int>(std::lround(proj->pixel.x() / stride)) * stride);
      const int v = std::min(last_v, static_cast<int>(std::lround(proj->pixel.y() / stride)) * stride);
      const float observed = depth[n][static_cast<std::size_t>(v) * intr.width + u];
      if (observed <= 0.0f) continue;
      const double sdf = observed - proj->depth;
      if (sdf < -lambda) continue;
      acc += std::clamp(sdf / lambda, -1.0, 1.0);
      ++count;
    }
    if (count > 0) out.tsdf[d] = static_cast<float>(acc / count);
  }
  return out;
}

LocalPrediction external_heads(const FeatureMatrix& fused, const LocalHeadContext& ctx) {
  if (ctx.params == nullptr) throw ConfigError("head", "external mode requires head parameters");
  const LocalHeadParams& p = *ctx.params;
  if (p.occupancy.weight.size() != fused.cols() || p.tsdf.weight.size() != fused.cols()) {
    throw InvalidInput("external heads: readout width does not match features");
  }
  LocalPrediction out;
  const Eigen::VectorXf occ = fused * p.occupancy.weight;
  const Eigen::VectorXf tsdf = fused * p.tsdf.weight;
  out.occupancy.resize(static_cast<std::size_t>(fused.rows()));
  out.tsdf.resize(static_cast<std::size_t>(fused.rows()));
  for (Eigen::Index d = 0; d < fused.rows(); ++d) {
    out.occupancy[static_cast<std::size_t>(d)] = static_cast<float>(sigmoid(occ[d] + p.occupancy.bias));
    out.tsdf[static_cast<std::size_t>(d)] = std::tanh(tsdf[d] + p.tsdf.bias);
  }
  return out;
}

}  // namespace

LocalPrediction predict_local_heads(const FeatureMatrix& fused, const VisibilityWeights& w,
                                    const SimilarityVolume& sv, const SparseVoxelGrid& grid,
                                    std::span<const Camera> cameras, const LocalHeadContext& ctx) {
  if (static_cast<std::size_t>(fused.rows()) != grid.size() || w.voxels != grid.size() ||
      sv.voxels != grid.size()) {
    throw InvalidInput("predict_local_heads: inputs do not share the grid's voxel set");
  }
  switch (ctx.mode) {
    case HeadMode::kOracle:
      return oracle_heads(grid, ctx);
    case HeadMode::kHeuristic:
      return heuristic_heads(w, sv, grid, cameras, ctx);
    case HeadMode::kExternal:
      return external_heads(fused, ctx);
  }
  throw ConfigError("head", "unknown mode");
}

GtVisibility ground_truth_visibility(const SparseVoxelGrid& grid, std::span<const Camera> cameras,
                                     const GroundTruthScene& scene, double lambda) {
  const auto views = static_cast<int>(cameras.size());
  GtVisibility gt{VisibilityWeights(grid.size(), views), {}};
  const double margin = 0.5 * grid.spec().voxel_size;
  for (std::size_t d = 0; d < grid.size(); ++d) {
    const Vec3 center = grid.center(d);
    if (!(std::abs(scene.sdf(center)) < lambda)) continue;
    for (int n = 0; n < views; ++n) {
      const Camera& cam = cameras[static_cast<std::size_t>(n)];
      if (!project_point(cam.intrinsics, cam.pose, center)) continue;
      const Vec3 eye = cam.pose.camera_center();
      const Vec3 to_voxel = center - eye;
      const double dist = to_voxel.norm();
      const double limit = dist - margin;
      bool occluded = false;
      if (limit > 0.0) {
        const auto hit = trace_first_hit(scene, eye, to_voxel / dist, limit);
        occluded = hit && *hit < limit;
      }
      if (!occluded) gt.binary.at(d, n) = 1.0f;
    }
  }
  gt.normalized = gt.binary.normalized();
  return gt;
}

double loss_visibility(const VisibilityWeights& pred, const VisibilityWeights& gt_binary) {
  if (pred.voxels != gt_binary.voxels || pred.views != gt_binary.views) {
    throw InvalidInput("loss_visibility: shape mismatch");
  }
  if (pred.w.empty()) return 0.0;
  const VisibilityWeights target = gt_binary.normalized();
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.w.size(); ++i) {
    const double diff = static_cast<double>(pred.w[i]) - target.w[i];
    sum += diff * diff;
  }
  return sum / static_cast<double>(pred.w.size());
}

double loss_occupancy(std::span<const float> pred, std::span<const std::uint8_t> gt) {
  if (pred.size() != gt.size()) throw InvalidInput("loss_occupancy: size mismatch");
  if (pred.empty()) return 0.0;
  constexpr double kEps = 1e-7;
  double sum = 0.0;
  for (std::size_t d = 0; d < pred.size(); ++d) {
    const double p = std::clamp(static_cast<double>(pred[d]), kEps, 1.0 - kEps);
    sum += gt[d] ? -std::log(p) : -std::log(1.0 - p);
  }
  return sum / static_cast<double>(pred.size());
}

double loss_tsdf(std::span<const float> pred, std::span<const float> gt) {
  if (pred.size() != gt.size()) throw InvalidInput("loss_tsdf: size mismatch");
  if (pred.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t d = 0; d < pred.size(); ++d) sum += std::abs(log_scale(pred[d]) - log_scale(gt[d]));
  return sum / static_cast<double>(pred.size());
}

}  // namespace visfuse
