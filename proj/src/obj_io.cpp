#include <fstream>
#include <sstream>
#include <string>

#include "ssr/geometry.hpp"

namespace ssr::geometry {
namespace {

// "7", "7/2", "7//3", "-1" -> zero-based index
std::uint32_t parse_index(const std::string& token, std::size_t num_vertices,
                          std::size_t line_no) {
  const std::string head = token.substr(0, token.find('/'));
  long long idx = 0;
  try {
    std::size_t used = 0;
    idx = std::stoll(head, &used);
    if (used != head.size()) throw std::invalid_argument(head);
  } catch (const std::exception&) {
    throw GeometryError("obj: line " + std::to_string(line_no) + ": bad face index '" +
                        token + "'");
  }
  if (idx < 0) idx += static_cast<long long>(num_vertices) + 1;
  if (idx < 1 || idx > static_cast<long long>(num_vertices)) {
    throw GeometryError("obj: line " + std::to_string(line_no) + ": face index " +
                        token + " out of range");
  }
  return static_cast<std::uint32_t>(idx - 1);
}

}  // namespace

Mesh read_obj(std::istream& in) {
  std::vector<Eigen::Vector3d> verts;
  std::vector<Face> faces;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Eigen::Vector3d p;
      if (!(ls >> p.x() >> p.y() >> p.z())) {
        throw GeometryError("obj: line " + std::to_string(line_no) + ": malformed vertex");
      }
      verts.push_back(p);
    } else if (tag == "f") {
      std::vector<std::string> tokens;
      for (std::string tok; ls >> tok;) tokens.push_back(tok);
      if (tokens.size() != 3) {
        throw GeometryError("obj: line " + std::to_string(line_no) + ": only triangles supported, got " +
                            std::to_string(tokens.size()) + " indices");
      }
      faces.push_back({parse_index(tokens[0], verts.size(), line_no),
                       parse_index(tokens[1], verts.size(), line_no),
                       parse_index(tokens[2], verts.size(), line_no)});
    }
    // vt, vn, o, g, s, usemtl, mtllib are ignored.
  }
  return Mesh(verts, std::move(faces));
}

Mesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw GeometryError("obj: cannot open " + path.string());
  try {
    return read_obj(in);
  } catch (const GeometryError& e) {
    throw GeometryError(path.string() + ": " + e.what());
  }
}

void write_obj(const Mesh& mesh, std::ostream& out) {
  char buf[128];
  for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
    const auto p = mesh.vertex(i);
    std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    out << buf;
  }
  for (const auto& f : mesh.faces()) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

void save_obj(const Mesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw GeometryError("obj: cannot write " + path.string());
  write_obj(mesh, out);
  if (!out) throw GeometryError("obj: write failed for " + path.string());
}

}  // namespace ssr::geometry
