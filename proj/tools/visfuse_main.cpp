#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "visfuse/config.hpp"
#include "visfuse/error.hpp"
#include "visfuse/evaluation.hpp"
#include "visfuse/pipeline.hpp"
#include "visfuse/surface.hpp"

namespace fs = std::filesystem;
using namespace visfuse;

namespace {

PointCloud load_cloud(const std::string& path, const PipelineConfig& cfg, bool is_gt) {
  if (path.ends_with(".ply")) {
    const TriangleMesh mesh = read_ply(path);
    if (mesh.triangles.empty()) return mesh.vertices;
    return sample_mesh(mesh, cfg.sample_density, cfg.seed + (is_gt ? 1 : 0));
  }
  // A scene: every camera of its trajectory defines the visible surface.
  PipelineConfig scene_cfg = cfg;
  scene_cfg.scene = path;
  const InputStream input = load_input(scene_cfg);
  std::vector<Camera> cameras;
  for (const FrameRecord& f : input.frames) cameras.push_back(f.camera());
  return ground_truth_samples(input.scene->scene, cameras, cfg);
}

int run_reconstruct(const std::string& config_path, const std::map<std::string, std::string>& overrides) {
  PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : load_config(config_path);
  for (const auto& [k, v] : overrides) set_config_value(cfg, k, v);
  if (cfg.output_dir.empty()) throw ConfigError("output_dir", "--out is required");
  cfg.validate();
  const RunResult r = run_pipeline(cfg);
  spdlog::info("{} fragments, {} vertices, {} triangles in {:.1f} s", r.fragments.size(), r.mesh.vertices.size(),
               r.mesh.triangles.size(), r.seconds);
  if (r.metrics) std::cout << metrics_to_json(*r.metrics);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visibility-aware incremental TSDF reconstruction"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off");

  auto* reconstruct = app.add_subcommand("reconstruct", "Reconstruct a mesh from a scene or dataset");
  std::string config_path, scene, dataset, out, strategy, predictor, head, provider;
  std::uint64_t seed = 0;
  std::vector<std::string> sets;
  reconstruct->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
  auto* scene_opt = reconstruct->add_option("--scene", scene, "scene file or canonical scene name");
  auto* dataset_opt = reconstruct->add_option("--dataset", dataset, "dataset directory");
  scene_opt->excludes(dataset_opt);
  reconstruct->add_option("--out", out, "output directory")->required();
  reconstruct->add_option("--strategy", strategy, "sliding_window, topk or threshold");
  reconstruct->add_option("--predictor", predictor, "oracle, heuristic or external");
  reconstruct->add_option("--head", head, "oracle, heuristic or external");
  reconstruct->add_option("--features", provider, "depth_oracle, photometric or constant");
  auto* seed_opt = reconstruct->add_option("--seed", seed, "random seed");
  reconstruct->add_option("--set", sets, "extra key=value config overrides");

  auto* evaluate = app.add_subcommand("evaluate", "Compare a mesh against ground truth");
  std::string pred_path, gt_path, eval_config;
  double threshold_cm = 5.0;
  evaluate->add_option("--pred", pred_path, "predicted mesh (PLY)")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--gt", gt_path, "ground truth PLY, scene file or canonical scene")->required();
  evaluate->add_option("--threshold-cm", threshold_cm, "distance threshold in cm");
  evaluate->add_option("--config", eval_config, "config supplying sampling settings")->check(CLI::ExistingFile);

  auto* ablate = app.add_subcommand("ablate", "Run every config in a directory and print a CSV report");
  std::string configs_dir, csv_out;
  ablate->add_option("--configs", configs_dir, "directory of .cfg files")->required()->check(CLI::ExistingDirectory);
  ablate->add_option("--out", csv_out, "CSV output path (default stdout)");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*reconstruct) {
      std::map<std::string, std::string> overrides;
      for (const std::string& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError(s, "--set expects key=value");
        overrides[s.substr(0, eq)] = s.substr(eq + 1);
      }
      if (!scene.empty()) {
        overrides["scene"] = scene;
        overrides["dataset"] = "";
      }
      if (!dataset.empty()) {
        overrides["dataset"] = dataset;
        overrides["scene"] = "";
      }
      overrides["output_dir"] = out;
      if (!strategy.empty()) overrides["strategy"] = strategy;
      if (!predictor.empty()) overrides["predictor"] = predictor;
      if (!head.empty()) overrides["head"] = head;
      if (!provider.empty()) overrides["feature_provider"] = provider;
      if (*seed_opt) overrides["seed"] = std::to_string(seed);
      return run_reconstruct(config_path, overrides);
    }
    if (*evaluate) {
      const PipelineConfig cfg = eval_config.empty() ? PipelineConfig{} : load_config(eval_config);
      const PointCloud pred = load_cloud(pred_path, cfg, false);
      const PointCloud gt = load_cloud(gt_path, cfg, true);
      std::cout << metrics_to_json(compute_metrics(pred, gt, threshold_cm));
      return 0;
    }
    if (*ablate) {
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(configs_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".cfg") files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      if (files.empty()) throw IoError(configs_dir, "no .cfg files");
      std::vector<PipelineConfig> configs;
      for (const fs::path& f : files) {
        PipelineConfig c = load_config(f);
        if (c.label.empty()) c.label = f.stem().string();
        // Relative scene and dataset paths resolve against the config file.
        for (std::string* p : {&c.scene, &c.dataset}) {
          if (!p->empty() && fs::path(*p).is_relative() && fs::exists(f.parent_path() / *p)) {
            *p = (f.parent_path() / *p).string();
          }
        }
        c.validate();
        configs.push_back(std::move(c));
      }
      const std::string csv = ablation_report(configs);
      if (csv_out.empty()) {
        std::cout << csv;
      } else {
        std::ofstream os(csv_out);
        if (!os) throw IoError(csv_out, "cannot open for writing");
        os << csv;
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    spdlog::error("config error ({}): {}", e.field(), e.what());
    return 2;
  } catch (const EmptyResult& e) {
    spdlog::error("not enough input: {}", e.what());
    return 3;
  } catch (const IoError& e) {
    spdlog::error("I/O error ({}): {}", e.path(), e.what());
    return 4;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
