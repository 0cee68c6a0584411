#include "visfuse/global_fusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <Eigen/QR>

#include "visfuse/binary_io.hpp"
#include "visfuse/error.hpp"

namespace visfuse {

namespace {

struct SplitMix {
  std::uint64_t state;
  std::uint64_t next() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  // Box-Muller; portable across standard libraries unlike std::normal_distribution.
  double normal() {
    const double u1 = std::max(uniform(), 0x1.0p-53);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
};

Eigen::MatrixXf orthogonal_rows(int rows, int cols, SplitMix& rng) {
  Eigen::MatrixXd g(cols, cols);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  return q.topRows(rows).cast<float>();
}

Eigen::VectorXf random_unit(int n, SplitMix& rng) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal();
  return (v / v.norm()).cast<float>();
}

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
  return 1.0f / (1.0f + (-x).exp());
}

int floor_div2(int v) { return v >= 0 ? v / 2 : -((-v + 1) / 2); }

void write_matrix(std::ostream& os, const Eigen::MatrixXf& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) io::write_le<float>(os, m(r, c));
}
void write_vector(std::ostream& os, const Eigen::VectorXf& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) io::write_le<float>(os, v[i]);
}
Eigen::MatrixXf read_matrix(std::istream& is, int rows, int cols) {
  Eigen::MatrixXf m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = io::read_le<float>(is);
  return m;
}
Eigen::VectorXf read_vector(std::istream& is, int n) {
  Eigen::VectorXf v(n);
  for (int i = 0; i < n; ++i) v[i] = io::read_le<float>(is);
  return v;
}

}  // namespace

void GruParams::validate() const {
  const int c = channels;
  if (c <= 0) throw InvalidInput("GruParams: channels must be positive");
  for (const Eigen::MatrixXf* w : {&update_w, &reset_w, &candidate_w}) {
    if (w->rows() != c || w->cols() != 2 * c) throw InvalidInput("GruParams: gate matrix must be C x 2C");
    if (!w->allFinite()) throw InvalidInput("GruParams: non-finite weights");
  }
  for (const Eigen::VectorXf* b : {&update_b, &reset_b, &candidate_b}) {
    if (b->size() != c) throw InvalidInput("GruParams: bias must have C entries");
    if (!b->allFinite()) throw InvalidInput("GruParams: non-finite bias");
  }
}

GruParams GruParams::seeded(int channels, std::uint64_t seed) {
  SplitMix rng{seed};
  GruParams p;
  p.channels = channels;
  p.update_w = orthogonal_rows(channels, 2 * channels, rng);
  p.reset_w = orthogonal_rows(channels, 2 * channels, rng);
  p.candidate_w = orthogonal_rows(channels, 2 * channels, rng);
  p.update_b = Eigen::VectorXf::Zero(channels);
  p.reset_b = Eigen::VectorXf::Zero(channels);
  p.candidate_b = Eigen::VectorXf::Zero(channels);
  return p;
}

FeatureMatrix gru_fuse(const FeatureMatrix& local, const FeatureMatrix& global, const GruParams& params) {
  params.validate();
  const int c = params.channels;
  if (local.cols() != c || global.cols() != c) throw InvalidInput("gru_fuse: feature width mismatch");
  if (local.rows() != global.rows()) throw InvalidInput("gru_fuse: row count mismatch");
  const Eigen::Index d = local.rows();
  FeatureMatrix x(d, 2 * c);
  x << local, global;
  const Eigen::ArrayXXf z =
      sigmoid(((x * params.update_w.transpose()).rowwise() + params.update_b.transpose()).array());
  const Eigen::ArrayXXf r =
      sigmoid(((x * params.reset_w.transpose()).rowwise() + params.reset_b.transpose()).array());
  x.rightCols(c) = (r * global.array()).matrix();
  const Eigen::ArrayXXf h =
      ((x * params.candidate_w.transpose()).rowwise() + params.candidate_b.transpose())
          .array()
          .unaryExpr([](float v) { return std::tanh(v); });
  FeatureMatrix out = ((1.0f - z) * global.array() + z * h).matrix();
  return out;
}

LevelParams LevelParams::seeded(int level, int channels, std::uint64_t seed) {
  LevelParams p;
  p.level = level;
  p.gru = GruParams::seeded(channels, seed + static_cast<std::uint64_t>(level) * 1000003ULL);
  SplitMix rng{seed ^ (0xA5A5A5A5ULL + static_cast<std::uint64_t>(level))};
  p.local.occupancy = {random_unit(channels, rng), 0.0f};
  p.local.tsdf = {random_unit(channels, rng), 0.0f};
  p.global_tsdf = {random_unit(channels, rng), 0.0f};
  return p;
}

void write_level_params(const std::filesystem::path& path, const LevelParams& p) {
  p.gru.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot write");
  io::write_magic(out, "VFG1");
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.level));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.gru.channels));
  write_matrix(out, p.gru.update_w);
  write_vector(out, p.gru.update_b);
  write_matrix(out, p.gru.reset_w);
  write_vector(out, p.gru.reset_b);
  write_matrix(out, p.gru.candidate_w);
  write_vector(out, p.gru.candidate_b);
  for (const LinearReadout* r : {&p.local.occupancy, &p.local.tsdf, &p.global_tsdf}) {
    if (r->weight.size() != p.gru.channels) throw InvalidInput("write_level_params: readout width mismatch");
    write_vector(out, r->weight);
    io::write_le<float>(out, r->bias);
  }
  if (!out) throw IoError(path.string(), "write failed");
}

LevelParams read_level_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open");
  io::expect_magic(in, "VFG1", path.string());
  LevelParams p;
  p.level = static_cast<int>(io::read_le<std::uint32_t>(in));
  const int c = static_cast<int>(io::read_le<std::uint32_t>(in));
  if (!in || c <= 0 || c > 4096) throw IoError(path.string(), "bad header");
  p.gru.channels = c;
  p.gru.update_w = read_matrix(in, c, 2 * c);
  p.gru.update_b = read_vector(in, c);
  p.gru.reset_w = read_matrix(in, c, 2 * c);
  p.gru.reset_b = read_vector(in, c);
  p.gru.candidate_w = read_matrix(in, c, 2 * c);
  p.gru.candidate_b = read_vector(in, c);
  for (LinearReadout* r : {&p.local.occupancy, &p.local.tsdf, &p.global_tsdf}) {
    r->weight = read_vector(in, c);
    r->bias = io::read_le<float>(in);
  }
  if (!in) throw IoError(path.string(), "truncated parameters");
  p.gru.validate();
  return p;
}

std::optional<std::size_t> LevelVolume::find(const Index3& global) const {
  const auto it = index_.find(global);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

FeatureMatrix LevelVolume::gather_hidden(std::span<const Index3> coords) const {
  FeatureMatrix out = FeatureMatrix::Zero(static_cast<Eigen::Index>(coords.size()), channels_);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (const auto slot = find(coords[i])) {
      const auto h = hidden(*slot);
      std::copy(h.begin(), h.end(), out.row(static_cast<Eigen::Index>(i)).data());
    }
  }
  return out;
}

void LevelVolume::upsert(std::span<const Index3> coords, const FeatureMatrix& hidden,
                         std::span<const float> tsdf) {
  if (hidden.rows() != static_cast<Eigen::Index>(coords.size()) || tsdf.size() != coords.size()) {
    throw InvalidInput("LevelVolume::upsert: row count mismatch");
  }
  if (hidden.cols() != channels_) throw InvalidInput("LevelVolume::upsert: hidden width mismatch");
  const auto c = static_cast<std::size_t>(channels_);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (!hidden.row(static_cast<Eigen::Index>(i)).allFinite()) {
      throw InvalidInput("LevelVolume::upsert: non-finite hidden state");
    }
    const float t = std::clamp(tsdf[i], -1.0f, 1.0f);
    const float* src = hidden.row(static_cast<Eigen::Index>(i)).data();
    auto [it, inserted] = index_.try_emplace(coords[i], static_cast<std::uint32_t>(coords_.size()));
    if (inserted) {
      coords_.push_back(coords[i]);
      hidden_.insert(hidden_.end(), src, src + c);
      tsdf_.push_back(t);
    } else {
      std::copy(src, src + c, hidden_.begin() + static_cast<std::ptrdiff_t>(it->second * c));
      tsdf_[it->second] = t;
    }
  }
}

std::vector<std::size_t> LevelVolume::sorted_slots() const {
  std::vector<std::size_t> slots(coords_.size());
  for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = i;
  std::sort(slots.begin(), slots.end(),
            [&](std::size_t a, std::size_t b) { return Index3Less{}(coords_[a], coords_[b]); });
  return slots;
}

bool LevelVolume::operator==(const LevelVolume& other) const {
  if (channels_ != other.channels_ || size() != other.size()) return false;
  for (std::size_t s = 0; s < size(); ++s) {
    const auto o = other.find(coords_[s]);
    if (!o) return false;
    if (tsdf_[s] != other.tsdf_[*o]) return false;
    const auto a = hidden(s);
    const auto b = other.hidden(*o);
    if (!std::equal(a.begin(), a.end(), b.begin())) return false;
  }
  return true;
}

GlobalVolume::GlobalVolume(std::array<int, 3> channels)
    : levels_{LevelVolume(channels[0]), LevelVolume(channels[1]), LevelVolume(channels[2])} {}

void update_global(GlobalVolume& volume, int level, std::span<const Index3> coords,
                   const FeatureMatrix& fused, std::span<const float> tsdf) {
  volume.level(level).upsert(coords, fused, tsdf);
}

std::vector<float> compose_residual(std::span<const float> base, std::span<const float> delta) {
  if (base.size() != delta.size()) throw InvalidInput("compose_residual: size mismatch");
  std::vector<float> out(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) out[i] = std::clamp(base[i] + delta[i], -1.0f, 1.0f);
  return out;
}

std::vector<float> upsample_tsdf(std::span<const Index3> fine_coords, const LevelVolume& coarse,
                                 UpsampleMode mode, std::size_t* missing) {
  std::vector<float> out(fine_coords.size(), 1.0f);
  std::size_t absent = 0;
  for (std::size_t i = 0; i < fine_coords.size(); ++i) {
    const Index3& f = fine_coords[i];
    const Index3 parent(floor_div2(f.x()), floor_div2(f.y()), floor_div2(f.z()));
    const auto slot = coarse.find(parent);
    if (!slot) ++absent;
    if (mode == UpsampleMode::kNearest) {
      if (slot) out[i] = coarse.tsdf(*slot);
      continue;
    }
    // Fine center in coarse voxel units, relative to coarse centers.
    const Eigen::Array3d c = (f.cast<double>().array() + 0.5) / 2.0 - 0.5;
    const Eigen::Array3d c0 = c.floor();
    const Eigen::Array3d t = c - c0;
    double value = 0.0;
    for (int corner = 0; corner < 8; ++corner) {
      const Index3 offset(corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
      const Index3 q = c0.cast<int>().matrix() + offset;
      double weight = 1.0;
      for (int a = 0; a < 3; ++a) weight *= offset[a] ? t[a] : 1.0 - t[a];
      const auto s = coarse.find(q);
      value += weight * (s ? coarse.tsdf(*s) : 1.0);
    }
    out[i] = static_cast<float>(value);
  }
  if (missing) *missing = absent;
  return out;
}

std::vector<float> predict_residual(const FeatureMatrix& fused, std::span<const float> base,
                                    std::span<const float> local_tsdf, std::span<const Vec3> centers,
                                    std::span<const float> previous_tsdf,
                                    std::span<const std::uint8_t> has_previous,
                                    const GlobalHeadContext& ctx) {
  const std::size_t n = base.size();
  if (local_tsdf.size() != n || centers.size() != n || previous_tsdf.size() != n ||
      has_previous.size() != n || static_cast<std::size_t>(fused.rows()) != n) {
    throw InvalidInput("predict_residual: size mismatch");
  }
  std::vector<float> delta(n, 0.0f);
  if (ctx.zero_residual) return delta;
  switch (ctx.mode) {
    case HeadMode::kOracle: {
      if (ctx.scene == nullptr) throw ConfigError("head", "oracle mode requires a ground-truth scene");
      const Tsdf gt = gt_tsdf(*ctx.scene, centers, ctx.lambda);
      for (std::size_t i = 0; i < n; ++i) delta[i] = gt.tsdf[i] - base[i];
      break;
    }
    case HeadMode::kHeuristic:
      for (std::size_t i = 0; i < n; ++i) {
        const float target = has_previous[i] ? 0.5f * (local_tsdf[i] + previous_tsdf[i]) : local_tsdf[i];
        delta[i] = target - base[i];
      }
      break;
    case HeadMode::kExternal: {
      if (ctx.readout == nullptr) throw ConfigError("head", "external mode requires a global readout");
      if (ctx.readout->weight.size() != fused.cols()) throw InvalidInput("predict_residual: readout width");
      const Eigen::VectorXf y = fused * ctx.readout->weight;
      for (std::size_t i = 0; i < n; ++i) {
        delta[i] = std::tanh(y[static_cast<Eigen::Index>(i)] + ctx.readout->bias);
      }
      break;
    }
  }
  return delta;
}

double total_loss(std::span<const LevelLosses> levels, std::span<const double> weights) {
  if (levels.size() != weights.size()) throw InvalidInput("total_loss: one weight per level required");
  double total = 0.0;
  for (std::size_t l = 0; l < levels.size(); ++l) total += weights[l] * levels[l].sum();
  return total;
}

void write_checkpoint(const std::filesystem::path& path, const GlobalVolume& volume) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot write checkpoint");
  for (int l = 1; l <= 3; ++l) {
    const LevelVolume& lv = volume.level(l);
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(lv.size()));
    for (std::size_t slot : lv.sorted_slots()) {
      const Index3& c = lv.coord(slot);
      for (int a = 0; a < 3; ++a) io::write_le<std::int32_t>(out, c[a]);
      for (float h : lv.hidden(slot)) io::write_le<float>(out, h);
      io::write_le<float>(out, lv.tsdf(slot));
    }
  }
  if (!out) throw IoError(path.string(), "checkpoint write failed");
}

GlobalVolume read_checkpoint(const std::filesystem::path& path, std::array<int, 3> channels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open checkpoint");
  GlobalVolume volume(channels);
  for (int l = 1; l <= 3; ++l) {
    const auto count = io::read_le<std::uint32_t>(in);
    if (!in) throw IoError(path.string(), "truncated checkpoint");
    const int c = channels[static_cast<std::size_t>(l - 1)];
    std::vector<Index3> coords(count);
    FeatureMatrix hidden(static_cast<Eigen::Index>(count), c);
    std::vector<float> tsdf(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      for (int a = 0; a < 3; ++a) coords[i][a] = io::read_le<std::int32_t>(in);
      for (int k = 0; k < c; ++k) hidden(static_cast<Eigen::Index>(i), k) = io::read_le<float>(in);
      tsdf[i] = io::read_le<float>(in);
    }
    if (!in) throw IoError(path.string(), "truncated checkpoint");
    volume.level(l).upsert(coords, hidden, tsdf);
  }
  return volume;
}

}  // namespace visfuse
