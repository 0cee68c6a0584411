#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "visfuse/binary_io.hpp"
#include "visfuse/error.hpp"
#include "visfuse/surface.hpp"

namespace visfuse {

namespace {

enum class Scalar { kInt8, kUInt8, kInt16, kUInt16, kInt32, kUInt32, kFloat32, kFloat64 };

Scalar parse_scalar(const std::string& name, const std::string& path) {
  if (name == "char" || name == "int8") return Scalar::kInt8;
  if (name == "uchar" || name == "uint8") return Scalar::kUInt8;
  if (name == "short" || name == "int16") return Scalar::kInt16;
  if (name == "ushort" || name == "uint16") return Scalar::kUInt16;
  if (name == "int" || name == "int32") return Scalar::kInt32;
  if (name == "uint" || name == "uint32") return Scalar::kUInt32;
  if (name == "float" || name == "float32") return Scalar::kFloat32;
  if (name == "double" || name == "float64") return Scalar::kFloat64;
  throw IoError(path, "unsupported PLY property type '" + name + "'");
}

double read_binary(std::istream& is, Scalar s) {
  switch (s) {
    case Scalar::kInt8: return io::read_le<std::int8_t>(is);
    case Scalar::kUInt8: return io::read_le<std::uint8_t>(is);
    case Scalar::kInt16: return io::read_le<std::int16_t>(is);
    case Scalar::kUInt16: return io::read_le<std::uint16_t>(is);
    case Scalar::kInt32: return io::read_le<std::int32_t>(is);
    case Scalar::kUInt32: return io::read_le<std::uint32_t>(is);
    case Scalar::kFloat32: return io::read_le<float>(is);
    case Scalar::kFloat64: return io::read_le<double>(is);
  }
  return 0.0;
}

struct Property {
  std::string name;
  Scalar type = Scalar::kFloat32;
  bool is_list = false;
  Scalar count_type = Scalar::kUInt8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> props;
};

}  // namespace

void export_ply(const TriangleMesh& mesh, const std::filesystem::path& path) {
  mesh.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << mesh.vertices.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "element face " << mesh.triangles.size() << "\n"
      << "property list uchar int vertex_indices\nend_header\n";
  for (const Vec3& v : mesh.vertices) {
    for (int a = 0; a < 3; ++a) io::write_le<float>(out, static_cast<float>(v[a]));
  }
  for (const auto& t : mesh.triangles) {
    io::write_le<std::uint8_t>(out, 3);
    for (int i : t) io::write_le<std::int32_t>(out, i);
  }
  out.flush();
  if (!out) throw IoError(path.string(), "write failed");
}

TriangleMesh read_ply(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(p, "cannot open");
  std::string line;
  if (!std::getline(in, line) || line != "ply") throw IoError(p, "not a PLY file");
  bool binary = false;
  std::vector<Element> elements;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "binary_little_endian") binary = true;
      else if (fmt != "ascii") throw IoError(p, "unsupported PLY format '" + fmt + "'");
    } else if (word == "element") {
      Element e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (word == "property") {
      if (elements.empty()) throw IoError(p, "property before element");
      Property prop;
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string ct, it;
        ls >> ct >> it >> prop.name;
        prop.is_list = true;
        prop.count_type = parse_scalar(ct, p);
        prop.type = parse_scalar(it, p);
      } else {
        prop.type = parse_scalar(type, p);
        ls >> prop.name;
      }
      elements.back().props.push_back(prop);
    } else if (word == "end_header") {
      break;
    }
  }
  if (!in) throw IoError(p, "truncated PLY header");

  TriangleMesh mesh;
  for (const Element& e : elements) {
    const bool is_vertex = e.name == "vertex";
    const bool is_face = e.name == "face";
    for (std::size_t i = 0; i < e.count; ++i) {
      Vec3 v = Vec3::Zero();
      for (const Property& prop : e.props) {
        if (prop.is_list) {
          std::size_t n = 0;
          std::vector<int> idx;
          if (binary) {
            n = static_cast<std::size_t>(read_binary(in, prop.count_type));
            for (std::size_t k = 0; k < n; ++k) idx.push_back(static_cast<int>(read_binary(in, prop.type)));
          } else {
            in >> n;
            idx.resize(n);
            for (std::size_t k = 0; k < n; ++k) in >> idx[k];
          }
          if (is_face && (prop.name == "vertex_indices" || prop.name == "vertex_index")) {
            for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
          }
          continue;
        }
        double value = 0.0;
        if (binary) value = read_binary(in, prop.type);
        else in >> value;
        if (is_vertex) {
          if (prop.name == "x") v.x() = value;
          else if (prop.name == "y") v.y() = value;
          else if (prop.name == "z") v.z() = value;
        }
      }
      if (!in) throw IoError(p, "truncated PLY body");
      if (is_vertex) mesh.vertices.push_back(v);
    }
  }
  try {
    mesh.validate();
  } catch (const InvalidInput& err) {
    throw IoError(p, err.what());
  }
  return mesh;
}

void export_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
  mesh.validate();
  std::ofstream out(path);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  char buf[128];
  for (const Vec3& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", v.x(), v.y(), v.z());
    out << buf;
  }
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!out) throw IoError(path.string(), "write failed");
}

}  // namespace visfuse
