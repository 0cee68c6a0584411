#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "visfuse/geometry.hpp"

namespace visfuse {

class LevelVolume;

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;

  bool empty() const { return triangles.empty(); }
  /// Throws InvalidInput on out-of-range indices or non-finite vertices.
  void validate() const;
};

struct MeshingOptions {
  float iso = 0.0f;
  /// Value read for grid samples missing from the sparse set.
  float absent_value = 1.0f;
  /// Only polygonize cells whose eight corners are all present.
  bool skip_partial_cells = false;
};

/// Marching cubes over a sparse sample set. Sample g sits at
/// offset + (g + 0.5) * voxel_size. Triangles are wound so their normals
/// point towards increasing values; ambiguous faces use the asymptotic
/// decider. Vertices are shared per grid edge.
TriangleMesh marching_cubes(std::span<const Index3> coords, std::span<const float> values,
                            double voxel_size, const Vec3& offset = Vec3::Zero(),
                            const MeshingOptions& options = {});

/// Convenience overload on a global volume level (world-aligned indices).
TriangleMesh marching_cubes(const LevelVolume& level, double voxel_size,
                            const MeshingOptions& options = {});

/// Euler characteristic V - E + F.
long euler_characteristic(const TriangleMesh& mesh);

/// Binary little-endian PLY: float x,y,z; faces as uchar count + int32 indices.
void export_ply(const TriangleMesh& mesh, const std::filesystem::path& path);
/// Reads binary little-endian or ASCII PLY. A file without faces loads as a
/// point set (vertices only).
TriangleMesh read_ply(const std::filesystem::path& path);
void export_obj(const TriangleMesh& mesh, const std::filesystem::path& path);

}  // namespace visfuse
