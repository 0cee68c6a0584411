// Acceptance suite: one PASS/FAIL line per criterion. Criterion 11 only warns.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Geometry>
#include <spdlog/spdlog.h>

#include "oracles.hpp"
#include "visfuse/error.hpp"
#include "visfuse/pipeline.hpp"

using namespace visfuse;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, bool pass, const std::string& detail, bool soft = false) {
  const char* tag = pass ? "PASS" : (soft ? "WARN" : "FAIL");
  std::printf("[%s] C%-2d %s\n", tag, id, detail.c_str());
  std::fflush(stdout);
  if (!pass && !soft) ++failures;
}

template <typename... Args>
std::string format(const char* fmt, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("visfuse_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<FrameRecord> keyframes_of(const InputStream& input, const PipelineConfig& cfg) {
  const std::vector<int> ids = select_keyframes(input.frames, cfg.keyframe);
  std::vector<FrameRecord> out;
  std::size_t next = 0;
  for (const FrameRecord& f : input.frames) {
    if (next < ids.size() && f.frame_id == ids[next]) {
      out.push_back(f);
      ++next;
    }
  }
  return out;
}

// C1 ------------------------------------------------------------------------
void criterion_window() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<int> len(1, 64), kk(1, 16), level(0, 4);
  std::uniform_real_distribution<float> u(0, 1);
  int mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    std::vector<float> occ(static_cast<std::size_t>(len(rng)));
    for (float& o : occ) o = (i % 2) ? u(rng) : 0.25f * static_cast<float>(level(rng));
    const int k = kk(rng);
    const WindowSelection got = select_window(occ, k);
    const WindowSelection want = oracle::window_brute_force(occ, k);
    if (got.start != want.start || got.length != want.length) ++mismatches;
  }
  const double s = seconds_since(t0);
  report(1, mismatches == 0 && s < 5.0,
         format("sliding window vs brute force: %d/10000 mismatches, %.2f s (limit 5 s)", mismatches, s));
}

// C2 ------------------------------------------------------------------------
void criterion_traversal() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2002);
  std::uniform_int_distribution<int> dim(1, 12), lattice(-3, 14), small(-2, 2);
  std::uniform_real_distribution<double> u(-1.0, 1.0), vs(0.05, 0.5);
  std::normal_distribution<double> n;
  int mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    VoxelGridSpec g;
    g.voxel_size = (i % 4 == 0) ? 0.25 : vs(rng);
    g.origin = Vec3(u(rng), u(rng), u(rng));
    g.dims = Index3(dim(rng), dim(rng), dim(rng));
    const Vec3 extent = g.dims.cast<double>() * g.voxel_size;
    Ray r;
    if (i % 4 == 0) {
      // Lattice origins and small integer directions: edge and corner ties.
      r.origin = g.origin + Vec3(lattice(rng), lattice(rng), lattice(rng)) * g.voxel_size;
      Vec3 d(small(rng), small(rng), small(rng));
      if (d.isZero()) d = Vec3::UnitY();
      r.direction = d.normalized();
    } else {
      r.origin = g.origin + Vec3((u(rng) + 0.5) * extent.x() * 1.5, (u(rng) + 0.5) * extent.y() * 1.5,
                                 (u(rng) + 0.5) * extent.z() * 1.5);
      r.direction = Vec3(n(rng), n(rng), n(rng)).normalized();
    }
    r.t_min = (i % 3 == 0) ? 0.3 * std::abs(u(rng)) : 0.0;
    r.t_max = r.t_min + 2.0 * extent.norm() * std::abs(u(rng));
    if (traverse_ray(g, r) != oracle::traverse_brute_force(g, r)) ++mismatches;
  }
  const double s = seconds_since(t0);
  report(2, mismatches == 0 && s < 30.0,
         format("ray traversal vs box-intersection oracle: %d/10000 mismatches, %.2f s (limit 30 s)", mismatches, s));
}

// C3 ------------------------------------------------------------------------
void criterion_visibility() {
  const auto t0 = Clock::now();
  const SceneDescription desc = canonical_scene("sphere-orbit");
  std::vector<Camera> cams;
  for (const CameraPose& p : desc.trajectory.poses()) cams.push_back({desc.intrinsics, p});
  const double vs = 0.16, lambda = 3 * vs, step = 1e-4;
  const SparseVoxelGrid grid = SparseVoxelGrid::full(compute_fbv(cams, 3.0, vs));
  const GtVisibility gt = ground_truth_visibility(grid, cams, desc.scene, lambda);

  std::size_t pairs = 0, agree = 0, band_pairs = 0, band_agree = 0;
  for (std::size_t d = 0; d < grid.size(); ++d) {
    const Vec3 c = grid.center(d);
    const bool band = std::abs(desc.scene.sdf(c)) < lambda;
    for (std::size_t v = 0; v < cams.size(); ++v) {
      bool visible = false;
      if (band && project_point(cams[v].intrinsics, cams[v].pose, c)) {
        // Dense march from the camera up to half a voxel before the center.
        const Vec3 eye = cams[v].pose.camera_center();
        const Vec3 to = c - eye;
        const double limit = to.norm() - 0.5 * vs;
        const Vec3 dir = to.normalized();
        visible = true;
        for (double t = 0.0; t < limit; t += step) {
          if (desc.scene.sdf(eye + t * dir) <= 0.0) {
            visible = false;
            break;
          }
        }
      }
      const bool match = visible == (gt.binary.at(d, static_cast<int>(v)) > 0.0f);
      ++pairs;
      agree += match;
      if (band) {
        ++band_pairs;
        band_agree += match;
      }
    }
  }
  const double frac = double(agree) / double(pairs), band_frac = double(band_agree) / double(band_pairs);
  const double s = seconds_since(t0);
  report(3, frac >= 0.999 && band_frac >= 0.999 && s < 60.0,
         format("visibility vs dense ray march: %.4f%% of %zu pairs (%.4f%% of %zu band pairs), %.1f s", 100 * frac,
                pairs, 100 * band_frac, band_pairs, s));
}

// C4 ------------------------------------------------------------------------
void criterion_losses() {
  VisibilityWeights gt(1, 3);
  gt.w = {1, 1, 0};
  VisibilityWeights pred(1, 3);
  pred.w = {1, 0, 0};
  const double vis = loss_visibility(pred, gt);
  const double vis0 = loss_visibility(gt.normalized(), gt);
  const std::vector<float> half(6, 0.5f);
  const std::vector<std::uint8_t> labels = {1, 0, 1, 1, 0, 0};
  const std::vector<float> exact = {1, 0, 1, 1, 0, 0};
  const double bce = loss_occupancy(half, labels);
  const double bce0 = loss_occupancy(exact, labels);
  const std::vector<float> one = {1.0f}, zero = {0.0f}, t = {0.25f, -0.5f, 1.0f, -1.0f};
  const double l1 = loss_tsdf(one, zero);
  const double l10 = loss_tsdf(t, t);
  const bool pass = std::abs(vis - 1.0 / 6.0) <= 1e-9 && vis0 <= 1e-9 && std::abs(bce - std::numbers::ln2) <= 1e-9 &&
                    bce0 <= 1e-6 && std::abs(l1 - std::numbers::ln2) <= 1e-9 && l10 <= 1e-9;
  report(4, pass,
         format("losses: vis %.12f (1/6), bce %.12f (ln2), tsdf %.12f (ln2); fixed points %.1e / %.1e / %.1e", vis, bce,
                l1, vis0, bce0, l10));
}

// C5 ------------------------------------------------------------------------
void criterion_residual_identity() {
  const auto t0 = Clock::now();
  PipelineConfig cfg;
  cfg.scene = "room";
  cfg.zero_residual = true;
  const InputStream input = load_input(cfg);
  const auto fragments = assemble_fragments(keyframes_of(input, cfg), cfg.layout());

  std::array<std::vector<Index3>, 3> written;
  ReconstructorHooks hooks;
  hooks.kept = [&](int, int level, const SparseVoxelGrid& grid, std::span<const Camera>, const KeepMask& keep) {
    auto& out = written[static_cast<std::size_t>(level - 1)];
    out.clear();
    for (std::size_t d = 0; d < grid.size(); ++d)
      if (keep[d]) out.push_back(grid.global_index(d));
  };
  Reconstructor recon(cfg, &input.scene->scene, hooks);
  std::size_t checked = 0, mismatched = 0;
  for (const Fragment& f : fragments) {
    recon.integrate(f);
    for (int l = 2; l <= 3; ++l) {
      const LevelVolume& fine = recon.volume().level(l);
      const LevelVolume& coarse = recon.volume().level(l - 1);
      for (const Index3& g : written[static_cast<std::size_t>(l - 1)]) {
        const Index3 parent(g.x() >> 1, g.y() >> 1, g.z() >> 1);
        const auto slot = fine.find(g);
        const auto ps = coarse.find(parent);
        const float want = ps ? coarse.tsdf(*ps) : 1.0f;
        ++checked;
        if (!slot || fine.tsdf(*slot) != want) ++mismatched;
      }
    }
  }
  report(5, mismatched == 0 && checked > 0,
         format("zero residual on room: %zu/%zu fine voxels differ from nearest-parent TSDF over %zu fragments, %.1f s",
                mismatched, checked, fragments.size(), seconds_since(t0)));
}

// C6 ------------------------------------------------------------------------
void criterion_gru() {
  std::mt19937_64 rng(6006);
  std::uniform_real_distribution<float> u(-1, 1);
  const int c = 8;
  FeatureMatrix l(64, c), g(64, c);
  for (Eigen::Index i = 0; i < l.size(); ++i) {
    l.data()[i] = u(rng);
    g.data()[i] = u(rng);
  }
  GruParams p = GruParams::seeded(c, 77);
  p.update_b.setConstant(-1000.0f);
  const bool pass_through = gru_fuse(l, g, p) == g;

  GruParams q = GruParams::seeded(c, 77);
  q.update_w.setZero();
  q.update_b.setConstant(1000.0f);
  q.candidate_w.setZero();
  q.candidate_b = Eigen::VectorXf::LinSpaced(c, -0.5f, 0.5f);
  const FeatureMatrix over = gru_fuse(l, g, q);
  bool overwrite = true;
  for (Eigen::Index d = 0; d < over.rows(); ++d)
    for (int k = 0; k < c; ++k) overwrite &= over(d, k) == std::tanh(q.candidate_b[k]);

  GruParams h;
  h.channels = 1;
  h.update_w = h.reset_w = h.candidate_w = Eigen::MatrixXf::Ones(1, 2);
  h.update_b = h.reset_b = h.candidate_b = Eigen::VectorXf::Zero(1);
  FeatureMatrix l1(1, 1), g1(1, 1);
  l1(0, 0) = 0.5f;
  g1(0, 0) = 0.0f;
  const double got = gru_fuse(l1, g1, h)(0, 0);
  const double want = std::tanh(0.5) / (1.0 + std::exp(-0.5));
  report(6, pass_through && overwrite && std::abs(got - want) <= 1e-6,
         format("GRU: z=0 pass-through %s, z=1 overwrite %s, C=1 example %.7f vs %.7f", pass_through ? "exact" : "BROKEN",
                overwrite ? "exact" : "BROKEN", got, want));
}

// C7, C10, C11 -------------------------------------------------------------
void criterion_room_end_to_end() {
  PipelineConfig cfg;
  cfg.scene = "room";
  const fs::path a = scratch("room_a"), b = scratch("room_b"), s = scratch("room_stream");
  cfg.output_dir = a.string();
  const RunResult run = run_pipeline(cfg);
  const ReconMetrics m = run.metrics.value_or(ReconMetrics{1e9, 1e9, 1e9, 0, 0, 0});
  report(7, run.metrics && m.chamfer < 4.0 && m.fscore > 0.9 && run.seconds < 600.0,
         format("room oracle: chamfer %.3f cm (< 4), F@5cm %.4f (> 0.9), acc %.3f, comp %.3f, %zu fragments, %.1f s",
                m.chamfer, m.fscore, m.acc, m.comp, run.fragments.size(), run.seconds));

  cfg.output_dir = b.string();
  run_pipeline(cfg);
  const bool seeded_same =
      slurp(a / "mesh.ply") == slurp(b / "mesh.ply") && slurp(a / "metrics.json") == slurp(b / "metrics.json");

  PipelineConfig stream_cfg = cfg;
  stream_cfg.output_dir.clear();
  const InputStream input = load_input(stream_cfg);
  Reconstructor recon(stream_cfg, &input.scene->scene);
  for (const FrameRecord& f : input.frames) recon.push_frame(f);
  export_ply(recon.extract_mesh(), s / "mesh.ply");
  const bool stream_same = slurp(a / "mesh.ply") == slurp(s / "mesh.ply");
  report(10, seeded_same && stream_cfg.seed == cfg.seed && stream_same,
         format("determinism: repeated run mesh.ply+metrics.json %s; streaming vs batch mesh.ply %s",
                seeded_same ? "identical" : "DIFFER", stream_same ? "identical" : "DIFFER"));

  double worst = 0.0, total = 0.0;
  for (const FragmentLog& f : run.fragments) {
    worst = std::max(worst, f.levels[0].ms);
    total += f.levels[0].ms;
  }
  report(11, worst < 500.0,
         format("coarse level per fragment: max %.1f ms, mean %.1f ms (budget 500 ms)", worst,
                total / std::max<std::size_t>(1, run.fragments.size())),
         /*soft=*/true);
}

// C8 ------------------------------------------------------------------------
struct PoleStats {
  std::size_t surface = 0;
  std::size_t kept = 0;
  double retention() const { return surface ? double(kept) / double(surface) : 0.0; }
};

PoleStats pole_retention(SparsifyStrategy strategy) {
  PipelineConfig cfg;
  cfg.scene = "room";
  cfg.strategy = strategy;
  cfg.threshold_theta = 0.5;
  const InputStream input = load_input(cfg);
  const GroundTruthScene& scene = input.scene->scene;
  const std::size_t pole = *scene.find_tag("pole");
  const Shape& pole_shape = scene.primitives()[pole].shape;
  const double lambda1 = cfg.lambda(1);

  PoleStats stats;
  ReconstructorHooks hooks;
  hooks.occupancy = [&](int, int level, const SparseVoxelGrid& grid, std::vector<float>& occ) {
    const double lambda = cfg.lambda(level);
    for (std::size_t d = 0; d < grid.size(); ++d) {
      const Vec3 c = grid.center(d);
      if (scene.nearest(c) == pole && std::abs(shape_sdf(pole_shape, c)) < lambda) occ[d] *= 0.4f;
    }
  };
  hooks.kept = [&](int, int level, const SparseVoxelGrid& grid, std::span<const Camera> cameras,
                   const KeepMask& keep) {
    if (level != 1) return;
    const double half_diag = 0.5 * std::sqrt(3.0) * grid.spec().voxel_size;
    std::vector<Index3> surface;
    std::vector<std::size_t> where;
    for (std::size_t d = 0; d < grid.size(); ++d) {
      if (std::abs(shape_sdf(pole_shape, grid.center(d))) <= half_diag) {
        surface.push_back(grid.voxel(d));
        where.push_back(d);
      }
    }
    if (surface.empty()) return;
    const SparseVoxelGrid sub(grid.spec(), surface);
    const GtVisibility vis = ground_truth_visibility(sub, cameras, scene, lambda1);
    for (std::size_t i = 0; i < sub.size(); ++i) {
      bool seen = false;
      for (int v = 0; v < vis.binary.views; ++v) seen |= vis.binary.at(i, v) > 0.0f;
      if (!seen) continue;
      ++stats.surface;
      stats.kept += keep[*grid.find(sub.voxel(i))] ? 1 : 0;
    }
  };
  run_pipeline(cfg, input, hooks);
  return stats;
}

void criterion_thin_structure() {
  const auto t0 = Clock::now();
  const PoleStats sliding = pole_retention(SparsifyStrategy::kSlidingWindow);
  const PoleStats threshold = pole_retention(SparsifyStrategy::kThreshold);
  const PoleStats topk = pole_retention(SparsifyStrategy::kTopK);
  const bool pass = sliding.surface > 0 && sliding.retention() >= 0.9 && threshold.retention() < 0.2 &&
                    topk.retention() >= sliding.retention() - 0.10;
  report(8, pass,
         format("pole surface voxels kept at coarse level: sliding %.1f%% (>= 90), threshold %.1f%% (< 20), "
                "top-k %.1f%% (>= sliding - 10) over %zu voxel-fragments, %.1f s",
                100 * sliding.retention(), 100 * threshold.retention(), 100 * topk.retention(), sliding.surface,
                seconds_since(t0)));
}

// C9 ------------------------------------------------------------------------
void criterion_metrics() {
  std::mt19937_64 rng(9009);
  std::uniform_real_distribution<double> u(-1, 1);
  PointCloud a(400), b(300);
  for (Vec3& p : a) p = Vec3(u(rng), u(rng), u(rng));
  for (Vec3& p : b) p = Vec3(u(rng), u(rng), u(rng));
  const ReconMetrics id = compute_metrics(a, a);
  const bool identity = id.acc == 0 && id.comp == 0 && id.chamfer == 0 && id.prec == 1 && id.recall == 1 && id.fscore == 1;
  const PointCloud p0 = {Vec3::Zero()}, p1 = {Vec3(0.03, 0, 0)};
  const ReconMetrics one = compute_metrics(p0, p1, 5.0);
  const bool example = std::abs(one.acc - 3) <= 1e-9 && std::abs(one.comp - 3) <= 1e-9 && one.prec == 1 &&
                       one.recall == 1 && one.fscore == 1;
  const ReconMetrics ab = compute_metrics(a, b), ba = compute_metrics(b, a);
  const bool symmetric = std::abs(ab.acc - ba.comp) <= 1e-9 && std::abs(ab.comp - ba.acc) <= 1e-9 &&
                         std::abs(ab.chamfer - ba.chamfer) <= 1e-9 && std::abs(ab.prec - ba.recall) <= 1e-9 &&
                         std::abs(ab.fscore - ba.fscore) <= 1e-9;
  const Eigen::Matrix3d r = Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  const Vec3 shift(2.5, -1.0, 0.3);
  PointCloud ta = a, tb = b;
  for (Vec3& p : ta) p = r * p + shift;
  for (Vec3& p : tb) p = r * p + shift;
  const ReconMetrics t = compute_metrics(ta, tb);
  const bool rigid = std::abs(t.acc - ab.acc) <= 1e-9 && std::abs(t.comp - ab.comp) <= 1e-9 &&
                     std::abs(t.chamfer - ab.chamfer) <= 1e-9 && std::abs(t.fscore - ab.fscore) <= 1e-9;
  report(9, identity && example && symmetric && rigid,
         format("metrics: identity %s, 3 cm example %s, symmetry %s, rigid invariance %s", identity ? "ok" : "BROKEN",
                example ? "ok" : "BROKEN", symmetric ? "ok" : "BROKEN", rigid ? "ok" : "BROKEN"));
}

void guarded(int id, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, false, std::string("threw: ") + e.what());
  }
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::err);
  const auto t0 = Clock::now();
  guarded(1, criterion_window);
  guarded(2, criterion_traversal);
  guarded(3, criterion_visibility);
  guarded(4, criterion_losses);
  guarded(5, criterion_residual_identity);
  guarded(6, criterion_gru);
  guarded(7, criterion_room_end_to_end);
  guarded(8, criterion_thin_structure);
  guarded(9, criterion_metrics);
  std::printf("acceptance: %d hard failure(s), %.1f s total\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
