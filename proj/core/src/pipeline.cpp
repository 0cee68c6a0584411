#include "visfuse/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "visfuse/error.hpp"

namespace visfuse {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::filesystem::path sidecar(const PipelineConfig& c, const std::string& name) {
  return std::filesystem::path(c.external_dir) / name;
}

}  // namespace

std::string FragmentLog::to_line() const {
  std::ostringstream os;
  os << "fragment=" << index << "\tframes=" << first_frame << '-' << last_frame;
  for (int l = 1; l <= 3; ++l) {
    const LevelLog& lv = levels[static_cast<std::size_t>(l - 1)];
    const std::string p = "\tl" + std::to_string(l) + "_";
    os << p << "before=" << lv.voxels_before << p << "after=" << lv.voxels_after << p
       << "missing_parents=" << lv.missing_parents;
    if (has_losses) {
      os << p << "loss_vis=" << fmt(lv.losses.visibility) << p << "loss_occ=" << fmt(lv.losses.occupancy) << p
         << "loss_tsdf=" << fmt(lv.losses.tsdf) << p << "loss_global_occ=" << fmt(lv.losses.global_occupancy)
         << p << "loss_global_tsdf=" << fmt(lv.losses.global_tsdf);
    }
    os << p << "ms=" << fmt(lv.ms);
  }
  if (has_losses) os << "\ttotal_loss=" << fmt(total_loss);
  os << "\tms_features=" << fmt(stages.features) << "\tms_visibility=" << fmt(stages.visibility)
     << "\tms_heads=" << fmt(stages.heads) << "\tms_sparsify=" << fmt(stages.sparsify)
     << "\tms_fusion=" << fmt(stages.fusion) << "\tms_total=" << fmt(ms);
  return os.str();
}

Reconstructor::Reconstructor(PipelineConfig config, const GroundTruthScene* scene, ReconstructorHooks hooks)
    : config_(std::move(config)),
      scene_(scene),
      hooks_(std::move(hooks)),
      volume_(config_.channels),
      selector_(config_.keyframe) {
  config_.validate();
  provider_ = make_feature_provider(config_.feature_provider, scene_, config_.d_max);
  for (int l = 1; l <= 3; ++l) {
    const int c = config_.channels[static_cast<std::size_t>(l - 1)];
    LevelParams p;
    const auto file = sidecar(config_, "level" + std::to_string(l) + ".vfg");
    if (!config_.external_dir.empty() && (config_.head == HeadMode::kExternal || std::filesystem::exists(file))) {
      p = read_level_params(file);
      if (p.gru.channels != c) throw ConfigError("channels", "sidecar " + file.string() + " has a different width");
      if (p.level != l) throw ConfigError("external_dir", "sidecar " + file.string() + " is for another level");
    } else {
      p = LevelParams::seeded(l, c, config_.seed);
    }
    params_[static_cast<std::size_t>(l - 1)] = std::move(p);
  }
}

const FragmentLog& Reconstructor::integrate(const Fragment& fragment) {
  const auto t_fragment = Clock::now();
  const PipelineConfig& cfg = config_;
  const bool has_gt = scene_ != nullptr;
  FragmentLog log;
  log.index = fragment.index;
  log.first_frame = fragment.keyframes.front().frame_id;
  log.last_frame = fragment.keyframes.back().frame_id;
  log.has_losses = has_gt;
  const int views = static_cast<int>(fragment.keyframes.size());

  SparseVoxelGrid prev_grid;
  KeepMask prev_keep;
  for (int l = 1; l <= 3; ++l) {
    const auto li = static_cast<std::size_t>(l - 1);
    const auto t_level = Clock::now();
    LevelLog& lv = log.levels[li];
    const double lambda = cfg.lambda(l);
    const int channels = cfg.channels[li];

    SparseVoxelGrid grid = l == 1 ? SparseVoxelGrid::full(fragment.fbv[li])
                                  : upsample_voxels(prev_grid, prev_keep, fragment.fbv[li]);
    if (grid.empty()) break;
    lv.reached = true;
    lv.voxels_before = grid.size();

    std::vector<Camera> cameras;
    std::vector<FeatureMap> maps;
    auto t0 = Clock::now();
    for (const FrameRecord& frame : fragment.keyframes) {
      const CameraIntrinsics intr = frame.intrinsics.scaled(1.0 / cfg.feature_stride[li]);
      cameras.push_back({intr, frame.pose});
      maps.push_back(provider_->features(frame, intr, channels));
    }
    const FeatureVolume fv = backproject_features(grid, maps, cameras, views);
    log.stages.features += ms_since(t0);

    t0 = Clock::now();
    const SimilarityVolume sv = pairwise_similarity(fv);
    std::optional<GtVisibility> gt_vis;
    if (has_gt) gt_vis = ground_truth_visibility(grid, cameras, *scene_, lambda);
    std::unique_ptr<VisibilityPredictor> predictor;
    switch (cfg.predictor) {
      case PredictorMode::kOracle:
        if (!gt_vis) throw ConfigError("predictor", "oracle visibility needs a ground-truth scene");
        predictor = std::make_unique<OracleVisibility>(gt_vis->binary);
        break;
      case PredictorMode::kHeuristic:
        predictor = std::make_unique<HeuristicVisibility>(cfg.heuristic.tau_vis);
        break;
      case PredictorMode::kExternal:
        predictor = std::make_unique<ExternalVisibility>(ExternalVisibility::from_file(
            sidecar(cfg, "visibility_f" + std::to_string(fragment.index) + "_l" + std::to_string(l) + ".vfw"), l));
        break;
    }
    const VisibilityWeights w = predict_visibility(sv, *predictor);
    const FeatureMatrix fused = fuse_features(fv, w);
    log.stages.visibility += ms_since(t0);

    t0 = Clock::now();
    const RayBundle rays = cast_rays(grid, cameras, cfg.ray_stride, cfg.d_max);
    LocalHeadContext head_ctx;
    head_ctx.mode = cfg.head;
    head_ctx.lambda = lambda;
    head_ctx.heuristic = cfg.heuristic;
    head_ctx.window = cfg.window;
    head_ctx.scene = scene_;
    head_ctx.rays = &rays;
    head_ctx.params = &params_[li].local;
    LocalPrediction local = predict_local_heads(fused, w, sv, grid, cameras, head_ctx);
    if (hooks_.occupancy) hooks_.occupancy(fragment.index, l, grid, local.occupancy);

    std::vector<Vec3> centers(grid.size());
    for (std::size_t d = 0; d < grid.size(); ++d) centers[d] = grid.center(d);
    std::optional<Tsdf> gt;
    if (has_gt) {
      gt = gt_tsdf(*scene_, centers, lambda);
      lv.losses.visibility = loss_visibility(w, gt_vis->binary);
      lv.losses.occupancy = loss_occupancy(local.occupancy, gt->occupied);
      lv.losses.tsdf = loss_tsdf(local.tsdf, gt->tsdf);
    }
    log.stages.heads += ms_since(t0);

    t0 = Clock::now();
    KeepMask keep;
    switch (cfg.strategy) {
      case SparsifyStrategy::kSlidingWindow:
        keep = sparsify_fragment(grid.size(), local.occupancy, rays,
                                 {cfg.window, cfg.window_exclude_last ? WindowCount::kExcludeLast : WindowCount::kAllFull});
        break;
      case SparsifyStrategy::kTopK:
        keep = topk_sparsify(grid.size(), local.occupancy, rays, cfg.window);
        break;
      case SparsifyStrategy::kThreshold:
        keep = threshold_sparsify(local.occupancy, cfg.threshold_theta);
        break;
    }
    if (hooks_.kept) hooks_.kept(fragment.index, l, grid, cameras, keep);
    if (cfg.dump_kept_voxels && !cfg.output_dir.empty()) {
      const auto dir = std::filesystem::path(cfg.output_dir) / "kept";
      std::filesystem::create_directories(dir);
      write_kept_voxels(dir / ("fragment" + std::to_string(fragment.index) + "_level" + std::to_string(l) + ".txt"),
                        grid, keep);
    }
    log.stages.sparsify += ms_since(t0);

    t0 = Clock::now();
    std::vector<std::size_t> kept_ids;
    for (std::size_t d = 0; d < keep.size(); ++d) {
      if (keep[d]) kept_ids.push_back(d);
    }
    lv.voxels_after = kept_ids.size();
    const auto kept_count = static_cast<Eigen::Index>(kept_ids.size());
    std::vector<Index3> coords(kept_ids.size());
    std::vector<Vec3> kept_centers(kept_ids.size());
    std::vector<float> kept_local_tsdf(kept_ids.size());
    FeatureMatrix local_features(kept_count, channels);
    for (std::size_t i = 0; i < kept_ids.size(); ++i) {
      const std::size_t d = kept_ids[i];
      coords[i] = grid.global_index(d);
      kept_centers[i] = centers[d];
      kept_local_tsdf[i] = local.tsdf[d];
      local_features.row(static_cast<Eigen::Index>(i)) = fused.row(static_cast<Eigen::Index>(d));
    }
    LevelVolume& level_volume = volume_.level(l);
    const FeatureMatrix history = level_volume.gather_hidden(coords);
    const FeatureMatrix updated = gru_fuse(local_features, history, params_[li].gru);

    std::vector<float> base(kept_ids.size(), 0.0f);
    if (l > 1) base = upsample_tsdf(coords, volume_.level(l - 1), cfg.residual_upsample, &lv.missing_parents);
    if (lv.missing_parents > 0) {
      spdlog::debug("fragment {} level {}: {} voxels without a coarse parent", fragment.index, l, lv.missing_parents);
    }
    std::vector<float> previous(kept_ids.size(), 0.0f);
    std::vector<std::uint8_t> has_previous(kept_ids.size(), 0);
    for (std::size_t i = 0; i < coords.size(); ++i) {
      if (const auto slot = level_volume.find(coords[i])) {
        previous[i] = level_volume.tsdf(*slot);
        has_previous[i] = 1;
      }
    }
    GlobalHeadContext global_ctx;
    global_ctx.mode = cfg.head;
    global_ctx.lambda = lambda;
    global_ctx.zero_residual = cfg.zero_residual && l >= 2;
    global_ctx.scene = scene_;
    global_ctx.readout = &params_[li].global_tsdf;
    const std::vector<float> delta =
        predict_residual(updated, base, kept_local_tsdf, kept_centers, previous, has_previous, global_ctx);
    const std::vector<float> tsdf = compose_residual(base, delta);

    if (has_gt) {
      std::vector<float> occ(kept_ids.size());
      std::vector<float> gt_t(kept_ids.size());
      std::vector<std::uint8_t> gt_o(kept_ids.size());
      for (std::size_t i = 0; i < kept_ids.size(); ++i) {
        occ[i] = std::abs(tsdf[i]) < 1.0f ? 1.0f : 0.0f;
        gt_t[i] = gt->tsdf[kept_ids[i]];
        gt_o[i] = gt->occupied[kept_ids[i]];
      }
      lv.losses.global_occupancy = loss_occupancy(occ, gt_o);
      lv.losses.global_tsdf = loss_tsdf(tsdf, gt_t);
    }
    update_global(volume_, l, coords, updated, tsdf);
    log.stages.fusion += ms_since(t0);
    lv.ms = ms_since(t_level);

    prev_grid = std::move(grid);
    prev_keep = std::move(keep);
  }

  if (has_gt) {
    std::array<LevelLosses, 3> losses;
    for (std::size_t i = 0; i < 3; ++i) losses[i] = log.levels[i].losses;
    log.total_loss = total_loss(losses, cfg.loss_weights);
  }
  log.ms = ms_since(t_fragment);
  if (log.levels[0].ms > cfg.fragment_budget_ms) {
    spdlog::warn("fragment {}: coarse level took {:.1f} ms (budget {:.0f} ms)", fragment.index, log.levels[0].ms,
                 cfg.fragment_budget_ms);
  }
  spdlog::info("fragment {} (frames {}-{}): kept {}/{}/{} voxels in {:.0f} ms", log.index, log.first_frame,
               log.last_frame, log.levels[0].voxels_after, log.levels[1].voxels_after, log.levels[2].voxels_after,
               log.ms);
  for (const FrameRecord& f : fragment.keyframes) cameras_.push_back(f.camera());
  logs_.push_back(log);
  return logs_.back();
}

std::optional<FragmentLog> Reconstructor::push_frame(const FrameRecord& frame) {
  if (!selector_.accept(frame)) return std::nullopt;
  pending_.push_back(frame);
  if (static_cast<int>(pending_.size()) < config_.frames_per_fragment) return std::nullopt;
  if (config_.max_fragments > 0 && next_fragment_ >= config_.max_fragments) {
    pending_.clear();
    return std::nullopt;
  }
  const Fragment fragment = make_fragment(next_fragment_++, std::move(pending_), config_.layout());
  pending_.clear();
  return integrate(fragment);
}

TriangleMesh Reconstructor::extract_mesh() const {
  MeshingOptions options;
  options.skip_partial_cells = config_.mesh_skip_partial_cells;
  return marching_cubes(volume_.level(3), config_.voxel_size[2], options);
}

InputStream load_input(const PipelineConfig& config) {
  InputStream input;
  if (!config.dataset.empty()) {
    if (!std::filesystem::is_directory(config.dataset)) throw IoError(config.dataset, "dataset directory not found");
    input.frames = load_dataset(config.dataset);
    return input;
  }
  if (config.scene.empty()) throw ConfigError("scene", "either scene or dataset must be set");
  if (std::filesystem::exists(config.scene)) {
    input.scene = load_scene(config.scene);
  } else if (config.scene == "room" || config.scene == "sphere-orbit" || config.scene == "two-planes") {
    input.scene = canonical_scene(config.scene);
  } else {
    throw IoError(config.scene, "scene file not found");
  }
  const std::vector<CameraPose> poses = input.scene->trajectory.poses();
  for (std::size_t i = 0; i < poses.size(); ++i) {
    FrameRecord f;
    f.frame_id = static_cast<int>(i);
    f.intrinsics = input.scene->intrinsics;
    f.pose = poses[i];
    input.frames.push_back(std::move(f));
  }
  return input;
}

PointCloud ground_truth_samples(const GroundTruthScene& scene, std::span<const Camera> cameras,
                                const PipelineConfig& config) {
  std::vector<Camera> scaled(cameras.begin(), cameras.end());
  for (Camera& c : scaled) c.intrinsics = c.intrinsics.scaled(config.gt_image_scale);
  return visible_surface_samples(scene, scaled, config.d_max, config.gt_spacing);
}

RunResult run_pipeline(const PipelineConfig& config, ReconstructorHooks hooks) {
  config.validate();
  const InputStream input = load_input(config);
  return run_pipeline(config, input, std::move(hooks));
}

RunResult run_pipeline(const PipelineConfig& config, const InputStream& input, ReconstructorHooks hooks) {
  const auto t0 = Clock::now();
  const GroundTruthScene* scene = input.scene ? &input.scene->scene : nullptr;
  const std::vector<int> keyframe_ids = select_keyframes(input.frames, config.keyframe);
  std::vector<FrameRecord> keyframes;
  // Ids are strictly increasing, so one forward scan matches them to frames.
  std::size_t next = 0;
  for (const FrameRecord& f : input.frames) {
    if (next < keyframe_ids.size() && f.frame_id == keyframe_ids[next]) {
      keyframes.push_back(f);
      ++next;
    }
  }
  std::vector<Fragment> fragments = assemble_fragments(keyframes, config.layout());
  if (config.max_fragments > 0 && static_cast<int>(fragments.size()) > config.max_fragments) {
    fragments.resize(static_cast<std::size_t>(config.max_fragments));
  }

  Reconstructor recon(config, scene, std::move(hooks));
  for (const Fragment& f : fragments) recon.integrate(f);

  RunResult result;
  result.mesh = recon.extract_mesh();
  result.fragments = recon.logs();
  if (scene != nullptr) {
    const PointCloud gt = ground_truth_samples(*scene, recon.integrated_cameras(), config);
    const PointCloud pred = sample_mesh(result.mesh, config.sample_density, config.seed);
    if (pred.empty() || gt.empty()) {
      spdlog::warn("metrics skipped: {} predicted and {} ground-truth samples", pred.size(), gt.size());
    } else {
      result.metrics = compute_metrics(pred, gt, config.metric_threshold_cm);
    }
  }
  result.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  if (!config.output_dir.empty()) write_run_outputs(config, result);
  return result;
}

void write_run_outputs(const PipelineConfig& config, const RunResult& result) {
  const std::filesystem::path dir(config.output_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(dir.string(), ec.message());
  export_ply(result.mesh, dir / "mesh.ply");
  if (config.write_obj) export_obj(result.mesh, dir / "mesh.obj");
  if (result.metrics) write_metrics_json(dir / "metrics.json", *result.metrics);
  std::ofstream log(dir / "fragments.log");
  if (!log) throw IoError((dir / "fragments.log").string(), "cannot open for writing");
  for (const FragmentLog& f : result.fragments) log << f.to_line() << '\n';
  if (!log) throw IoError((dir / "fragments.log").string(), "write failed");
}

std::string ablation_report(std::span<const PipelineConfig> configs) {
  std::ostringstream csv;
  csv << "label,strategy,predictor,head,acc_cm,comp_cm,chamfer_cm,prec,recall,fscore,"
         "kept_l1,kept_l2,kept_l3,runtime_s\n";
  for (const PipelineConfig& config : configs) {
    const RunResult r = run_pipeline(config);
    std::array<std::size_t, 3> kept{};
    for (const FragmentLog& f : r.fragments) {
      for (std::size_t l = 0; l < 3; ++l) kept[l] += f.levels[l].voxels_after;
    }
    csv << config.label << ',' << to_string(config.strategy) << ',' << to_string(config.predictor) << ','
        << to_string(config.head);
    if (r.metrics) {
      const ReconMetrics& m = *r.metrics;
      for (double v : {m.acc, m.comp, m.chamfer, m.prec, m.recall, m.fscore}) csv << ',' << fmt(v);
    } else {
      csv << ",,,,,,";
    }
    csv << ',' << kept[0] << ',' << kept[1] << ',' << kept[2] << ',' << fmt(r.seconds) << '\n';
  }
  return csv.str();
}

}  // namespace visfuse
