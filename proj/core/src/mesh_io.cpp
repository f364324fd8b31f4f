#include "cgm/mesh_io.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cgm/errors.hpp"

namespace cgm {

namespace {

double parse_double(const std::string& tok, const std::string& path, int line_no) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw InputError(path + ":" + std::to_string(line_no) + ": bad number '" + tok + "'");
  return v;
}

// OBJ face corners look like "i", "i/j", "i/j/k", or "i//k"; only the vertex
// index matters here. Indices are 1-based.
int parse_obj_corner(const std::string& tok, const std::string& path, int line_no) {
  std::string head = tok.substr(0, tok.find('/'));
  int v = 0;
  auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), v);
  if (ec != std::errc() || ptr != head.data() + head.size() || v <= 0)
    throw InputError(path + ":" + std::to_string(line_no) + ": bad face index '" + tok + "'");
  return v - 1;
}

TriangleMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open mesh file: " + path);
  std::vector<Eigen::Vector3d> positions;
  std::vector<std::array<int, 3>> faces;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      std::string x, y, z;
      if (!(ls >> x >> y >> z))
        throw InputError(path + ":" + std::to_string(line_no) + ": malformed vertex");
      positions.emplace_back(parse_double(x, path, line_no), parse_double(y, path, line_no),
                             parse_double(z, path, line_no));
    } else if (tag == "f") {
      std::vector<int> corners;
      std::string tok;
      while (ls >> tok) corners.push_back(parse_obj_corner(tok, path, line_no));
      if (corners.size() != 3)
        throw InputError(path + ":" + std::to_string(line_no) +
                         ": only triangle faces are supported");
      faces.push_back({corners[0], corners[1], corners[2]});
    }
  }
  if (positions.empty() || faces.empty())
    throw InputError(path + ": no vertices or faces found");
  return TriangleMesh::build(std::move(positions), std::move(faces));
}

struct PlyProperty {
  std::string type;  // scalar type, or list count/element types joined later
  std::string name;
  bool is_list = false;
  std::string count_type, elem_type;
};

int scalar_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" ||
      t == "float32")
    return 4;
  if (t == "double" || t == "float64") return 8;
  throw InputError("ply: unknown property type '" + t + "'");
}

double read_binary_scalar(std::istream& in, const std::string& type) {
  unsigned char buf[8];
  int n = scalar_size(type);
  in.read(reinterpret_cast<char*>(buf), n);
  if (!in) throw InputError("ply: unexpected end of binary payload");
  auto as = [&](auto v) {
    std::memcpy(&v, buf, sizeof(v));
    return static_cast<double>(v);
  };
  if (type == "char" || type == "int8") return as(std::int8_t{});
  if (type == "uchar" || type == "uint8") return as(std::uint8_t{});
  if (type == "short" || type == "int16") return as(std::int16_t{});
  if (type == "ushort" || type == "uint16") return as(std::uint16_t{});
  if (type == "int" || type == "int32") return as(std::int32_t{});
  if (type == "uint" || type == "uint32") return as(std::uint32_t{});
  if (type == "float" || type == "float32") return as(float{});
  return as(double{});
}

TriangleMesh load_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open mesh file: " + path);
  std::string line;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply")
    throw InputError(path + ": not a PLY file");

  bool binary = false;
  struct Element {
    std::string name;
    long count = 0;
    std::vector<PlyProperty> props;
  };
  std::vector<Element> elements;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "comment" || tag == "obj_info") continue;
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii")
        binary = false;
      else if (fmt == "binary_little_endian")
        binary = true;
      else
        throw InputError(path + ": unsupported PLY format '" + fmt + "'");
    } else if (tag == "element") {
      Element el;
      ls >> el.name >> el.count;
      elements.push_back(el);
    } else if (tag == "property") {
      if (elements.empty()) throw InputError(path + ": property before element");
      PlyProperty p;
      std::string t;
      ls >> t;
      if (t == "list") {
        p.is_list = true;
        ls >> p.count_type >> p.elem_type >> p.name;
      } else {
        p.type = t;
        ls >> p.name;
      }
      elements.back().props.push_back(p);
    } else if (tag == "end_header") {
      break;
    }
  }

  std::vector<Eigen::Vector3d> positions;
  std::vector<std::array<int, 3>> faces;
  auto ascii_tokens = [&](int n) {
    std::vector<double> vals(n);
    for (double& v : vals)
      if (!(in >> v)) throw InputError(path + ": truncated ASCII payload");
    return vals;
  };

  for (const auto& el : elements) {
    if (el.name == "vertex") {
      int xi = -1, yi = -1, zi = -1;
      for (int i = 0; i < static_cast<int>(el.props.size()); ++i) {
        if (el.props[i].name == "x") xi = i;
        if (el.props[i].name == "y") yi = i;
        if (el.props[i].name == "z") zi = i;
      }
      if (xi < 0 || yi < 0 || zi < 0) throw InputError(path + ": vertex element lacks x/y/z");
      positions.reserve(el.count);
      for (long v = 0; v < el.count; ++v) {
        std::vector<double> vals(el.props.size());
        if (binary) {
          for (size_t i = 0; i < el.props.size(); ++i) {
            if (el.props[i].is_list) throw InputError(path + ": list property on vertices");
            vals[i] = read_binary_scalar(in, el.props[i].type);
          }
        } else {
          vals = ascii_tokens(static_cast<int>(el.props.size()));
        }
        positions.emplace_back(vals[xi], vals[yi], vals[zi]);
      }
    } else if (el.name == "face") {
      faces.reserve(el.count);
      for (long f = 0; f < el.count; ++f) {
        for (const auto& p : el.props) {
          if (p.is_list) {
            long n;
            if (binary)
              n = static_cast<long>(read_binary_scalar(in, p.count_type));
            else {
              if (!(in >> n)) throw InputError(path + ": truncated face list");
            }
            std::vector<long> idx(n);
            for (long& v : idx)
              v = binary ? static_cast<long>(read_binary_scalar(in, p.elem_type))
                         : (in >> v, v);
            if (p.name == "vertex_indices" || p.name == "vertex_index") {
              if (n != 3)
                throw InputError(path + ": only triangle faces are supported");
              faces.push_back({static_cast<int>(idx[0]), static_cast<int>(idx[1]),
                               static_cast<int>(idx[2])});
            }
          } else {
            if (binary)
              read_binary_scalar(in, p.type);
            else {
              double skip;
              in >> skip;
            }
          }
        }
      }
    } else {
      // Skip unknown elements (only possible to do safely for ASCII).
      if (binary && el.count > 0)
        throw InputError(path + ": unsupported binary element '" + el.name + "'");
      for (long i = 0; i < el.count; ++i) std::getline(in >> std::ws, line);
    }
  }
  if (positions.empty() || faces.empty())
    throw InputError(path + ": no vertices or faces found");
  return TriangleMesh::build(std::move(positions), std::move(faces));
}

}  // namespace

TriangleMesh load_mesh(const std::string& path, MeshFormat format) {
  return format == MeshFormat::Obj ? load_obj(path) : load_ply(path);
}

TriangleMesh load_mesh(const std::string& path) {
  auto dot = path.rfind('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  for (char& c : ext) c = static_cast<char>(std::tolower(c));
  if (ext == "obj") return load_mesh(path, MeshFormat::Obj);
  if (ext == "ply") return load_mesh(path, MeshFormat::Ply);
  throw InputError("cannot infer mesh format from path: " + path);
}

void save_ply(const std::string& path, const std::vector<Eigen::Vector3d>& positions,
              const std::vector<std::array<int, 3>>& faces,
              const std::vector<std::array<std::uint8_t, 3>>* colors, const std::string& scalar_name,
              const std::vector<double>* scalar) {
  if (colors && colors->size() != positions.size())
    throw Error("save_ply: color count does not match vertex count");
  if (scalar && scalar->size() != positions.size())
    throw Error("save_ply: scalar count does not match vertex count");
  std::ofstream out(path);
  if (!out) throw InputError("cannot write PLY file: " + path);
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << positions.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  if (colors)
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (scalar) out << "property double " << scalar_name << "\n";
  out << "element face " << faces.size() << "\n";
  out << "property list uchar int vertex_indices\nend_header\n";

  char buf[64];
  auto fmt = [&](double v) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
  };
  for (size_t i = 0; i < positions.size(); ++i) {
    out << fmt(positions[i].x()) << ' ' << fmt(positions[i].y()) << ' ' << fmt(positions[i].z());
    if (colors)
      out << ' ' << int((*colors)[i][0]) << ' ' << int((*colors)[i][1]) << ' '
          << int((*colors)[i][2]);
    if (scalar) out << ' ' << fmt((*scalar)[i]);
    out << '\n';
  }
  for (const auto& f : faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  if (!out) throw Error("save_ply: write failed: " + path);
}

std::vector<double> load_intensities(const std::string& path, int expected_count) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open intensity file: " + path);
  std::vector<double> vals;
  double v;
  while (in >> v) vals.push_back(v);
  if (static_cast<int>(vals.size()) != expected_count)
    throw InputError(path + ": expected " + std::to_string(expected_count) +
                     " intensities, found " + std::to_string(vals.size()));
  return vals;
}

}  // namespace cgm
