#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include <Eigen/Geometry>

#include "visfuse/error.hpp"
#include "visfuse/global_fusion.hpp"
#include "visfuse/sparse_grid.hpp"
#include "visfuse/surface.hpp"

namespace visfuse {

namespace {

// Corner i sits at offset (i & 1, (i >> 1) & 1, (i >> 2) & 1). Each face
// lists its corners counter-clockwise as seen from outside the cell.
constexpr std::array<std::array<int, 4>, 6> kFaces = {{
    {0, 4, 6, 2}, {1, 3, 7, 5}, {0, 1, 5, 4}, {2, 6, 7, 3}, {0, 2, 3, 1}, {4, 5, 7, 6},
}};

struct EdgeTable {
  std::array<std::array<int, 8>, 8> id{};
  std::array<std::array<int, 2>, 12> ends{};
  std::array<int, 12> axis{};

  EdgeTable() {
    int k = 0;
    for (int i = 0; i < 8; ++i) {
      for (int a = 0; a < 3; ++a) {
        if ((i >> a) & 1) continue;
        const int j = i | (1 << a);
        id[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = k;
        id[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = k;
        ends[static_cast<std::size_t>(k)] = {i, j};
        axis[static_cast<std::size_t>(k)] = a;
        ++k;
      }
    }
  }
};

const EdgeTable& edges() {
  static const EdgeTable table;
  return table;
}

Index3 corner_offset(int i) { return {i & 1, (i >> 1) & 1, (i >> 2) & 1}; }

// Closed polygons of one cell as cycles of local edge ids. Every face
// contributes directed segments with the inside (value < 0) on their left
// seen from outside; the segments chain into cycles across faces.
void cell_cycles(const std::array<double, 8>& w, std::vector<std::vector<int>>& cycles) {
  const EdgeTable& et = edges();
  std::array<int, 12> next;
  next.fill(-1);
  for (const auto& face : kFaces) {
    std::array<double, 4> fw{};
    for (int k = 0; k < 4; ++k) fw[static_cast<std::size_t>(k)] = w[static_cast<std::size_t>(face[static_cast<std::size_t>(k)])];
    struct Crossing {
      int edge;
      bool exit;
    };
    std::array<Crossing, 4> xs{};
    int count = 0;
    for (int k = 0; k < 4; ++k) {
      const bool in0 = fw[static_cast<std::size_t>(k)] < 0.0;
      const bool in1 = fw[static_cast<std::size_t>((k + 1) % 4)] < 0.0;
      if (in0 == in1) continue;
      const int a = face[static_cast<std::size_t>(k)];
      const int b = face[static_cast<std::size_t>((k + 1) % 4)];
      xs[static_cast<std::size_t>(count++)] = {et.id[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)], in0};
    }
    if (count == 2) {
      const Crossing& x = xs[0].exit ? xs[0] : xs[1];
      const Crossing& n = xs[0].exit ? xs[1] : xs[0];
      next[static_cast<std::size_t>(x.edge)] = n.edge;
    } else if (count == 4) {
      // Asymptotic decider: sign of the bilinear interpolant at its saddle.
      const double saddle = (fw[0] * fw[2] - fw[1] * fw[3]) / (fw[0] + fw[2] - fw[1] - fw[3]);
      const bool inside_connected = saddle < 0.0;
      for (int p = 0; p < 4; ++p) {
        if (!xs[static_cast<std::size_t>(p)].exit) continue;
        const int q = inside_connected ? (p + 1) % 4 : (p + 3) % 4;
        next[static_cast<std::size_t>(xs[static_cast<std::size_t>(p)].edge)] = xs[static_cast<std::size_t>(q)].edge;
      }
    }
  }
  std::array<bool, 12> used{};
  for (int start = 0; start < 12; ++start) {
    if (next[static_cast<std::size_t>(start)] < 0 || used[static_cast<std::size_t>(start)]) continue;
    std::vector<int> cycle;
    int e = start;
    while (!used[static_cast<std::size_t>(e)]) {
      used[static_cast<std::size_t>(e)] = true;
      cycle.push_back(e);
      e = next[static_cast<std::size_t>(e)];
      if (e < 0) throw Error("marching_cubes: open contour in cell");
    }
    if (cycle.size() >= 3) cycles.push_back(std::move(cycle));
  }
}

// Bit f set when edge e lies on face f.
const std::array<int, 12>& edge_face_masks() {
  static const std::array<int, 12> masks = [] {
    const EdgeTable& et = edges();
    std::array<int, 12> m{};
    for (int e = 0; e < 12; ++e) {
      const auto [a, b] = et.ends[static_cast<std::size_t>(e)];
      for (int f = 0; f < 6; ++f) {
        const auto& face = kFaces[static_cast<std::size_t>(f)];
        const bool has_a = std::find(face.begin(), face.end(), a) != face.end();
        const bool has_b = std::find(face.begin(), face.end(), b) != face.end();
        if (has_a && has_b) m[static_cast<std::size_t>(e)] |= 1 << f;
      }
    }
    return m;
  }();
  return masks;
}

// Fan apex with the smallest edge id whose triangles never have all three
// corners on one cell face. Such a triangle would lie in the face and be
// duplicated by the neighbouring cell. -1 when no apex works. The choice does
// not depend on the cycle direction, so negated fields give reversed meshes.
int fan_apex(const std::vector<int>& cycle) {
  const auto& mask = edge_face_masks();
  const std::size_t n = cycle.size();
  std::vector<std::size_t> candidates(n);
  for (std::size_t i = 0; i < n; ++i) candidates[i] = i;
  std::sort(candidates.begin(), candidates.end(),
            [&](std::size_t x, std::size_t y) { return cycle[x] < cycle[y]; });
  for (std::size_t a : candidates) {
    bool ok = true;
    for (std::size_t k = 1; k + 1 < n && ok; ++k) {
      const int m = mask[static_cast<std::size_t>(cycle[a])] & mask[static_cast<std::size_t>(cycle[(a + k) % n])] &
                    mask[static_cast<std::size_t>(cycle[(a + k + 1) % n])];
      ok = m == 0;
    }
    if (ok) return static_cast<int>(a);
  }
  return -1;
}

// Whether the fan over a traced cycle has to be reversed so normals point
// towards increasing values. Checked once on the single-corner case.
bool fan_needs_flip() {
  static const bool flip = [] {
    std::array<double, 8> w;
    w.fill(1.0);
    w[0] = -1.0;
    std::vector<std::vector<int>> cycles;
    cell_cycles(w, cycles);
    const EdgeTable& et = edges();
    std::array<Vec3, 3> p;
    for (int k = 0; k < 3; ++k) {
      const auto& ends = et.ends[static_cast<std::size_t>(cycles[0][static_cast<std::size_t>(k)])];
      p[static_cast<std::size_t>(k)] =
          0.5 * (corner_offset(ends[0]) + corner_offset(ends[1])).cast<double>();
    }
    const Vec3 n = (p[1] - p[0]).cross(p[2] - p[0]);
    return n.dot(Vec3::Ones()) < 0.0;
  }();
  return flip;
}

struct VertexKey {
  Index3 g;
  int axis;  // 0..2 for an edge starting at g, 3 for the sample g itself
  bool operator==(const VertexKey& o) const { return axis == o.axis && g == o.g; }
};

struct VertexKeyHash {
  std::size_t operator()(const VertexKey& k) const noexcept {
    return Index3Hash{}(k.g) * 31u + static_cast<std::size_t>(k.axis);
  }
};

}  // namespace

void TriangleMesh::validate() const {
  for (const Vec3& v : vertices) {
    if (!v.allFinite()) throw InvalidInput("TriangleMesh: non-finite vertex");
  }
  const auto n = static_cast<int>(vertices.size());
  for (const auto& t : triangles) {
    for (int i : t) {
      if (i < 0 || i >= n) throw InvalidInput("TriangleMesh: triangle index out of range");
    }
  }
}

TriangleMesh marching_cubes(std::span<const Index3> coords, std::span<const float> values,
                            double voxel_size, const Vec3& offset, const MeshingOptions& options) {
  if (coords.size() != values.size()) throw InvalidInput("marching_cubes: coords/values size mismatch");
  if (!(voxel_size > 0.0)) throw InvalidInput("marching_cubes: voxel size must be positive");
  std::unordered_map<Index3, float, Index3Hash> field;
  field.reserve(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (!std::isfinite(values[i])) throw InvalidInput("marching_cubes: non-finite sample");
    if (!field.emplace(coords[i], values[i]).second) throw InvalidInput("marching_cubes: duplicate sample");
  }

  std::vector<Index3> cells;
  cells.reserve(coords.size() * 8);
  for (const Index3& c : coords) {
    for (int i = 0; i < 8; ++i) cells.push_back(c - corner_offset(i));
  }
  std::sort(cells.begin(), cells.end(), Index3Less{});
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());

  const EdgeTable& et = edges();
  const bool flip = fan_needs_flip();
  const double iso = options.iso;
  TriangleMesh mesh;
  std::unordered_map<VertexKey, int, VertexKeyHash> vertex_of;
  std::vector<std::vector<int>> cycles;

  for (const Index3& cell : cells) {
    std::array<double, 8> w{};
    int present = 0;
    int inside = 0;
    for (int i = 0; i < 8; ++i) {
      const auto it = field.find(cell + corner_offset(i));
      float v = options.absent_value;
      if (it != field.end()) {
        v = it->second;
        ++present;
      }
      w[static_cast<std::size_t>(i)] = static_cast<double>(v) - iso;
      if (w[static_cast<std::size_t>(i)] < 0.0) ++inside;
    }
    if (inside == 0 || inside == 8) continue;
    if (options.skip_partial_cells && present < 8) continue;

    cycles.clear();
    cell_cycles(w, cycles);

    // Assign vertices in edge-id order so indices do not depend on winding.
    std::array<int, 12> vid;
    vid.fill(-1);
    for (int e = 0; e < 12; ++e) {
      const auto [a, b] = et.ends[static_cast<std::size_t>(e)];
      const double wa = w[static_cast<std::size_t>(a)];
      const double wb = w[static_cast<std::size_t>(b)];
      if ((wa < 0.0) == (wb < 0.0)) continue;
      const Index3 ga = cell + corner_offset(a);
      const double t = wa / (wa - wb);
      VertexKey key{ga, et.axis[static_cast<std::size_t>(e)]};
      Vec3 local = ga.cast<double>();
      if (t <= 0.0) {
        key.axis = 3;
      } else if (t >= 1.0) {
        key = {cell + corner_offset(b), 3};
        local = key.g.cast<double>();
      } else {
        local[key.axis] += t;
      }
      const auto [it, inserted] = vertex_of.try_emplace(key, static_cast<int>(mesh.vertices.size()));
      if (inserted) {
        mesh.vertices.push_back(offset + (local.array() + 0.5).matrix() * voxel_size);
      }
      vid[static_cast<std::size_t>(e)] = it->second;
    }

    for (const auto& cycle : cycles) {
      const std::size_t n = cycle.size();
      const auto emit = [&](int v0, int v1, int v2) {
        if (flip) std::swap(v1, v2);
        if (v0 == v1 || v1 == v2 || v0 == v2) return;
        mesh.triangles.push_back({v0, v1, v2});
      };
      const int apex = fan_apex(cycle);
      if (apex >= 0) {
        const auto a = static_cast<std::size_t>(apex);
        const int v0 = vid[static_cast<std::size_t>(cycle[a])];
        for (std::size_t k = 1; k + 1 < n; ++k) {
          emit(v0, vid[static_cast<std::size_t>(cycle[(a + k) % n])],
               vid[static_cast<std::size_t>(cycle[(a + k + 1) % n])]);
        }
      } else {
        // Fan around an extra vertex at the polygon centroid.
        std::vector<int> sorted = cycle;
        std::sort(sorted.begin(), sorted.end());
        Vec3 c = Vec3::Zero();
        for (int e : sorted) c += mesh.vertices[static_cast<std::size_t>(vid[static_cast<std::size_t>(e)])];
        const int vc = static_cast<int>(mesh.vertices.size());
        mesh.vertices.push_back(c / static_cast<double>(n));
        for (std::size_t k = 0; k < n; ++k) {
          emit(vc, vid[static_cast<std::size_t>(cycle[k])], vid[static_cast<std::size_t>(cycle[(k + 1) % n])]);
        }
      }
    }
  }
  return mesh;
}

TriangleMesh marching_cubes(const LevelVolume& level, double voxel_size, const MeshingOptions& options) {
  std::vector<Index3> coords;
  std::vector<float> values;
  coords.reserve(level.size());
  values.reserve(level.size());
  for (std::size_t slot : level.sorted_slots()) {
    coords.push_back(level.coord(slot));
    values.push_back(level.tsdf(slot));
  }
  return marching_cubes(coords, values, voxel_size, Vec3::Zero(), options);
}

long euler_characteristic(const TriangleMesh& mesh) {
  struct PairHash {
    std::size_t operator()(const std::pair<int, int>& p) const noexcept {
      return std::hash<long long>{}((static_cast<long long>(p.first) << 32) ^ static_cast<unsigned>(p.second));
    }
  };
  std::unordered_set<std::pair<int, int>, PairHash> edge_set;
  std::unordered_set<int> used;
  for (const auto& t : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      const int a = t[static_cast<std::size_t>(k)];
      const int b = t[static_cast<std::size_t>((k + 1) % 3)];
      edge_set.insert({std::min(a, b), std::max(a, b)});
      used.insert(a);
    }
  }
  return static_cast<long>(used.size()) - static_cast<long>(edge_set.size()) +
         static_cast<long>(mesh.triangles.size());
}

}  // namespace visfuse
