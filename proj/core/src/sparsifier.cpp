#include "visfuse/sparsifier.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "visfuse/error.hpp"

namespace visfuse {

WindowSelection select_window(std::span<const float> occupancy, int window, WindowCount count) {
  if (occupancy.empty()) throw InvalidInput("select_window: empty occupancy sequence");
  if (window < 1) throw InvalidInput("select_window: window size must be at least 1");
  const std::size_t r = occupancy.size();
  const auto k = static_cast<std::size_t>(window);
  if (r <= k) {
    double sum = 0.0;
    for (float o : occupancy) sum += o;
    return {0, r, sum};
  }
  const std::size_t candidates = count == WindowCount::kAllFull ? r - k + 1 : r - k;
  // Each window is summed in index order so equal windows compare equal.
  WindowSelection best{0, k, -1.0};
  for (std::size_t i = 0; i < candidates; ++i) {
    double sum = 0.0;
    for (std::size_t j = i; j < i + k; ++j) sum += occupancy[j];
    if (sum > best.sum) {
      best.start = i;
      best.sum = sum;
    }
  }
  return best;
}

RayBundle cast_rays(const SparseVoxelGrid& grid, std::span<const Camera> cameras, int stride,
                    double d_max) {
  if (stride < 1) throw InvalidInput("cast_rays: stride must be at least 1");
  RayBundle bundle;
  bundle.stride_ = stride;
  std::vector<RaySpan> spans;
  for (std::size_t n = 0; n < cameras.size(); ++n) {
    const Camera& cam = cameras[n];
    const Vec3 eye = cam.pose.camera_center();
    for (int v = 0; v < cam.intrinsics.height; v += stride) {
      for (int u = 0; u < cam.intrinsics.width; u += stride) {
        const auto [dir, per_depth] = pixel_ray(cam.intrinsics, cam.pose, {u, v});
        traverse_ray(grid.spec(), Ray{eye, dir, 0.0, d_max * per_depth}, spans);
        for (const RaySpan& s : spans) {
          if (const auto d = grid.find(s.voxel)) {
            bundle.voxels_.push_back(static_cast<std::uint32_t>(*d));
            bundle.depths_.push_back(static_cast<float>(cam.pose.to_camera(grid.spec().center(s.voxel)).z()));
          }
        }
        bundle.rays_.push_back({static_cast<int>(n), u, v});
        bundle.offsets_.push_back(bundle.voxels_.size());
      }
    }
  }
  return bundle;
}

RayBundle subset_rays(const RayBundle& bundle, std::span<const std::size_t> rays) {
  RayBundle out;
  out.stride_ = bundle.stride_;
  for (std::size_t r : rays) {
    const auto vox = bundle.voxels(r);
    const auto dep = bundle.depths(r);
    out.voxels_.insert(out.voxels_.end(), vox.begin(), vox.end());
    out.depths_.insert(out.depths_.end(), dep.begin(), dep.end());
    out.rays_.push_back(bundle.info(r));
    out.offsets_.push_back(out.voxels_.size());
  }
  return out;
}

KeepMask sparsify_fragment(std::size_t voxel_count, std::span<const float> occupancy,
                           const RayBundle& rays, const SlidingWindowOptions& options) {
  if (occupancy.size() != voxel_count) throw InvalidInput("sparsify_fragment: occupancy size mismatch");
  KeepMask kept(voxel_count, 0);
  std::vector<float> along;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const auto voxels = rays.voxels(r);
    if (voxels.empty()) continue;
    along.resize(voxels.size());
    for (std::size_t i = 0; i < voxels.size(); ++i) along[i] = occupancy[voxels[i]];
    const WindowSelection w = select_window(along, options.window, options.count);
    for (std::size_t i = w.start; i < w.start + w.length; ++i) kept[voxels[i]] = 1;
  }
  return kept;
}

KeepMask sparsify_fragment(const SparseVoxelGrid& grid, std::span<const float> occupancy,
                           std::span<const Camera> cameras, int window, int stride, double d_max) {
  const RayBundle rays = cast_rays(grid, cameras, stride, d_max);
  return sparsify_fragment(grid.size(), occupancy, rays, {window, WindowCount::kAllFull});
}

KeepMask topk_sparsify(std::size_t voxel_count, std::span<const float> occupancy,
                       const RayBundle& rays, int window) {
  if (occupancy.size() != voxel_count) throw InvalidInput("topk_sparsify: occupancy size mismatch");
  if (window < 1) throw InvalidInput("topk_sparsify: K must be at least 1");
  KeepMask kept(voxel_count, 0);
  std::vector<std::size_t> order;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const auto voxels = rays.voxels(r);
    order.resize(voxels.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t k = std::min(order.size(), static_cast<std::size_t>(window));
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        const float oa = occupancy[voxels[a]];
                        const float ob = occupancy[voxels[b]];
                        return oa != ob ? oa > ob : a < b;
                      });
    for (std::size_t i = 0; i < k; ++i) kept[voxels[order[i]]] = 1;
  }
  return kept;
}

KeepMask threshold_sparsify(std::span<const float> occupancy, double theta) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw InvalidInput("threshold_sparsify: theta outside [0,1]");
  KeepMask kept(occupancy.size(), 0);
  for (std::size_t d = 0; d < occupancy.size(); ++d) kept[d] = occupancy[d] > theta ? 1 : 0;
  return kept;
}

SparseVoxelGrid upsample_voxels(const SparseVoxelGrid& coarse, std::span<const std::uint8_t> kept,
                                const VoxelGridSpec& fine) {
  if (kept.size() != coarse.size()) throw InvalidInput("upsample_voxels: mask size mismatch");
  const VoxelGridSpec& cs = coarse.spec();
  if (std::abs(fine.voxel_size * 2.0 - cs.voxel_size) > 1e-12 * cs.voxel_size ||
      fine.dims != cs.dims * 2 || !fine.origin.isApprox(cs.origin, 1e-12)) {
    throw InvalidInput("upsample_voxels: levels do not nest");
  }
  std::vector<Index3> children;
  for (std::size_t d = 0; d < coarse.size(); ++d) {
    if (!kept[d]) continue;
    const Index3 base = coarse.voxel(d) * 2;
    for (int dz = 0; dz < 2; ++dz)
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) children.push_back(base + Index3(dx, dy, dz));
  }
  return SparseVoxelGrid(fine, std::move(children));
}

void write_kept_voxels(const std::filesystem::path& path, const SparseVoxelGrid& grid,
                       std::span<const std::uint8_t> kept) {
  std::ofstream out(path);
  if (!out) throw IoError(path.string(), "cannot write kept-voxel dump");
  for (std::size_t d = 0; d < grid.size(); ++d) {
    if (kept[d]) {
      const Index3& v = grid.voxel(d);
      out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    }
  }
}

}  // namespace visfuse
