#include "visfuse/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "visfuse/error.hpp"

namespace visfuse {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double to_double(std::string_view key, std::string_view v) {
  v = trim(v);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(std::string(key), "expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

std::int64_t to_int(std::string_view key, std::string_view v) {
  v = trim(v);
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(std::string(key), "expected an integer, got '" + std::string(v) + "'");
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  v = trim(v);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(std::string(key), "expected a boolean, got '" + std::string(v) + "'");
}

std::vector<std::string_view> split_list(std::string_view key, std::string_view v, std::size_t n) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto comma = v.find(',', start);
    parts.push_back(trim(v.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (parts.size() != n) {
    throw ConfigError(std::string(key), "expected " + std::to_string(n) + " comma-separated values");
  }
  return parts;
}

template <typename T, typename F>
std::array<T, 3> triple(std::string_view key, std::string_view v, F convert) {
  const auto parts = split_list(key, v, 3);
  return {static_cast<T>(convert(key, parts[0])), static_cast<T>(convert(key, parts[1])),
          static_cast<T>(convert(key, parts[2]))};
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <typename T>
std::string fmt_triple(const std::array<T, 3>& a) {
  std::ostringstream os;
  os.precision(17);
  os << a[0] << ',' << a[1] << ',' << a[2];
  return os.str();
}

}  // namespace

SparsifyStrategy parse_strategy(std::string_view name) {
  if (name == "sliding_window") return SparsifyStrategy::kSlidingWindow;
  if (name == "topk") return SparsifyStrategy::kTopK;
  if (name == "threshold") return SparsifyStrategy::kThreshold;
  throw ConfigError("strategy", "unknown strategy '" + std::string(name) + "'");
}

std::string_view to_string(SparsifyStrategy strategy) {
  switch (strategy) {
    case SparsifyStrategy::kSlidingWindow: return "sliding_window";
    case SparsifyStrategy::kTopK: return "topk";
    case SparsifyStrategy::kThreshold: return "threshold";
  }
  return "?";
}

void PipelineConfig::validate() const {
  for (std::size_t l = 0; l < 3; ++l) {
    if (!(voxel_size[l] > 0.0)) throw ConfigError("voxel_size", "must be positive");
    if (l > 0 && std::abs(2.0 * voxel_size[l] - voxel_size[l - 1]) > 1e-12 * voxel_size[l - 1]) {
      throw ConfigError("voxel_size", "each level must halve the previous voxel size");
    }
    if (feature_stride[l] < 1) throw ConfigError("feature_stride", "must be >= 1");
    if (channels[l] < 1) throw ConfigError("channels", "must be >= 1");
    if (feature_provider != "constant" && channels[l] < 3) {
      throw ConfigError("channels", "feature providers other than constant need >= 3 channels");
    }
    if (!(loss_weights[l] >= 0.0)) throw ConfigError("loss_weights", "must be non-negative");
  }
  if (frames_per_fragment < 1) throw ConfigError("frames_per_fragment", "must be >= 1");
  if (window < 1) throw ConfigError("window", "must be >= 1");
  if (!(truncation_multiplier > 0.0)) throw ConfigError("truncation_multiplier", "must be positive");
  if (!(d_max > 0.0)) throw ConfigError("d_max", "must be positive");
  if (!(heuristic.tau_vis >= 0.0 && heuristic.tau_vis < 1.0)) throw ConfigError("tau_vis", "must lie in [0, 1)");
  if (!(heuristic.logistic_a > 0.0)) throw ConfigError("logistic_a", "must be positive");
  if (!(keyframe.translation_m >= 0.0)) throw ConfigError("keyframe_translation_m", "must be non-negative");
  if (!(keyframe.rotation_deg >= 0.0)) throw ConfigError("keyframe_rotation_deg", "must be non-negative");
  if (!(metric_threshold_cm > 0.0)) throw ConfigError("metric_threshold_cm", "must be positive");
  if (!(threshold_theta >= 0.0 && threshold_theta <= 1.0)) throw ConfigError("threshold_theta", "must lie in [0, 1]");
  if (ray_stride < 1) throw ConfigError("ray_stride", "must be >= 1");
  if (!(sample_density > 0.0)) throw ConfigError("sample_density", "must be positive");
  if (!(gt_spacing > 0.0)) throw ConfigError("gt_spacing", "must be positive");
  if (!(gt_image_scale > 0.0 && gt_image_scale <= 1.0)) throw ConfigError("gt_image_scale", "must lie in (0, 1]");
  if (max_fragments < 0) throw ConfigError("max_fragments", "must be >= 0");
  if (feature_provider != "constant" && feature_provider != "depth_oracle" &&
      feature_provider != "photometric") {
    throw ConfigError("feature_provider", "unknown provider '" + feature_provider + "'");
  }
  const bool needs_external = predictor == PredictorMode::kExternal || head == HeadMode::kExternal;
  if (needs_external && external_dir.empty()) {
    throw ConfigError("external_dir", "external predictor or head mode needs a sidecar directory");
  }
  if (!scene.empty() && !dataset.empty()) throw ConfigError("scene", "scene and dataset are mutually exclusive");
}

void set_config_value(PipelineConfig& c, std::string_view key, std::string_view raw) {
  const std::string_view v = trim(raw);
  const std::string k(key);
  if (key == "voxel_size") c.voxel_size = triple<double>(key, v, to_double);
  else if (key == "frames_per_fragment") c.frames_per_fragment = static_cast<int>(to_int(key, v));
  else if (key == "window") c.window = static_cast<int>(to_int(key, v));
  else if (key == "truncation_multiplier") c.truncation_multiplier = to_double(key, v);
  else if (key == "d_max") c.d_max = to_double(key, v);
  else if (key == "predictor") c.predictor = parse_predictor_mode(v, "predictor");
  else if (key == "head") c.head = parse_predictor_mode(v, "head");
  else if (key == "feature_provider") c.feature_provider = v == "depth-oracle" ? "depth_oracle" : std::string(v);
  else if (key == "tau_vis") c.heuristic.tau_vis = to_double(key, v);
  else if (key == "logistic_a") c.heuristic.logistic_a = to_double(key, v);
  else if (key == "logistic_b") c.heuristic.logistic_b = to_double(key, v);
  else if (key == "loss_weights") c.loss_weights = triple<double>(key, v, to_double);
  else if (key == "keyframe_translation_m") c.keyframe.translation_m = to_double(key, v);
  else if (key == "keyframe_rotation_deg") c.keyframe.rotation_deg = to_double(key, v);
  else if (key == "metric_threshold_cm") c.metric_threshold_cm = to_double(key, v);
  else if (key == "strategy") c.strategy = parse_strategy(v);
  else if (key == "threshold_theta") c.threshold_theta = to_double(key, v);
  else if (key == "window_exclude_last") c.window_exclude_last = to_bool(key, v);
  else if (key == "ray_stride") c.ray_stride = static_cast<int>(to_int(key, v));
  else if (key == "feature_stride") c.feature_stride = triple<int>(key, v, to_int);
  else if (key == "channels") c.channels = triple<int>(key, v, to_int);
  else if (key == "residual_upsample") {
    if (v == "nearest") c.residual_upsample = UpsampleMode::kNearest;
    else if (v == "trilinear") c.residual_upsample = UpsampleMode::kTrilinear;
    else throw ConfigError(k, "expected nearest or trilinear");
  }
  else if (key == "zero_residual") c.zero_residual = to_bool(key, v);
  else if (key == "mesh_skip_partial_cells") c.mesh_skip_partial_cells = to_bool(key, v);
  else if (key == "sample_density") c.sample_density = to_double(key, v);
  else if (key == "gt_spacing") c.gt_spacing = to_double(key, v);
  else if (key == "gt_image_scale") c.gt_image_scale = to_double(key, v);
  else if (key == "fragment_budget_ms") c.fragment_budget_ms = to_double(key, v);
  else if (key == "max_fragments") c.max_fragments = static_cast<int>(to_int(key, v));
  else if (key == "seed") {
    const auto s = to_int(key, v);
    if (s < 0) throw ConfigError(k, "must be non-negative");
    c.seed = static_cast<std::uint64_t>(s);
  }
  else if (key == "label") c.label = v;
  else if (key == "scene") c.scene = v;
  else if (key == "dataset") c.dataset = v;
  else if (key == "external_dir") c.external_dir = v;
  else if (key == "output_dir") c.output_dir = v;
  else if (key == "write_obj") c.write_obj = to_bool(key, v);
  else if (key == "dump_kept_voxels") c.dump_kept_voxels = to_bool(key, v);
  else throw ConfigError(k, "unknown key");
}

PipelineConfig parse_config(std::string_view text, const std::string& origin) {
  PipelineConfig config;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(std::string(line), origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    set_config_value(config, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return config;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open config");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string format_config(const PipelineConfig& c) {
  std::ostringstream os;
  auto b = [](bool x) { return x ? "true" : "false"; };
  os << "voxel_size = " << fmt_triple(c.voxel_size) << '\n'
     << "frames_per_fragment = " << c.frames_per_fragment << '\n'
     << "window = " << c.window << '\n'
     << "truncation_multiplier = " << fmt_double(c.truncation_multiplier) << '\n'
     << "d_max = " << fmt_double(c.d_max) << '\n'
     << "predictor = " << to_string(c.predictor) << '\n'
     << "head = " << to_string(c.head) << '\n'
     << "feature_provider = " << c.feature_provider << '\n'
     << "tau_vis = " << fmt_double(c.heuristic.tau_vis) << '\n'
     << "logistic_a = " << fmt_double(c.heuristic.logistic_a) << '\n'
     << "logistic_b = " << fmt_double(c.heuristic.logistic_b) << '\n'
     << "loss_weights = " << fmt_triple(c.loss_weights) << '\n'
     << "keyframe_translation_m = " << fmt_double(c.keyframe.translation_m) << '\n'
     << "keyframe_rotation_deg = " << fmt_double(c.keyframe.rotation_deg) << '\n'
     << "metric_threshold_cm = " << fmt_double(c.metric_threshold_cm) << '\n'
     << "strategy = " << to_string(c.strategy) << '\n'
     << "threshold_theta = " << fmt_double(c.threshold_theta) << '\n'
     << "window_exclude_last = " << b(c.window_exclude_last) << '\n'
     << "ray_stride = " << c.ray_stride << '\n'
     << "feature_stride = " << fmt_triple(c.feature_stride) << '\n'
     << "channels = " << fmt_triple(c.channels) << '\n'
     << "residual_upsample = " << (c.residual_upsample == UpsampleMode::kNearest ? "nearest" : "trilinear") << '\n'
     << "zero_residual = " << b(c.zero_residual) << '\n'
     << "mesh_skip_partial_cells = " << b(c.mesh_skip_partial_cells) << '\n'
     << "sample_density = " << fmt_double(c.sample_density) << '\n'
     << "gt_spacing = " << fmt_double(c.gt_spacing) << '\n'
     << "gt_image_scale = " << fmt_double(c.gt_image_scale) << '\n'
     << "fragment_budget_ms = " << fmt_double(c.fragment_budget_ms) << '\n'
     << "max_fragments = " << c.max_fragments << '\n'
     << "seed = " << c.seed << '\n'
     << "write_obj = " << b(c.write_obj) << '\n'
     << "dump_kept_voxels = " << b(c.dump_kept_voxels) << '\n';
  if (!c.label.empty()) os << "label = " << c.label << '\n';
  if (!c.scene.empty()) os << "scene = " << c.scene << '\n';
  if (!c.dataset.empty()) os << "dataset = " << c.dataset << '\n';
  if (!c.external_dir.empty()) os << "external_dir = " << c.external_dir << '\n';
  if (!c.output_dir.empty()) os << "output_dir = " << c.output_dir << '\n';
  return os.str();
}

}  // namespace visfuse
