#include "ssr/geometry.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

namespace ssr::geometry {
namespace {

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

void check_topology(std::size_t num_vertices, const std::vector<Face>& faces) {
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const auto& face = faces[f];
    for (auto idx : face) {
      if (idx >= num_vertices) {
        throw GeometryError("mesh: face " + std::to_string(f) + " references vertex " +
                            std::to_string(idx) + " of " + std::to_string(num_vertices));
      }
    }
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
      throw GeometryError("mesh: face " + std::to_string(f) + " repeats a vertex");
    }
  }
}

}  // namespace

Mesh::Mesh() : vertices_(ad::Shape{0, 3}, {}) {}

Mesh::Mesh(Tensor vertices, std::vector<Face> faces)
    : vertices_(std::move(vertices)), faces_(std::move(faces)) {
  if (vertices_.rank() != 2 || vertices_.dim(1) != 3) {
    throw GeometryError("mesh: vertices must be (V,3), got " +
                        ad::shape_str(vertices_.shape()));
  }
  check_topology(vertices_.dim(0), faces_);
}

Mesh::Mesh(const std::vector<Eigen::Vector3d>& vertices, std::vector<Face> faces)
    : faces_(std::move(faces)) {
  std::vector<double> flat;
  flat.reserve(vertices.size() * 3);
  for (const auto& v : vertices) flat.insert(flat.end(), {v.x(), v.y(), v.z()});
  vertices_ = Tensor({vertices.size(), 3}, std::move(flat));
  check_topology(vertices.size(), faces_);
}

Eigen::Vector3d Mesh::vertex(std::size_t i) const {
  const auto& v = vertices_.vec();
  return {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
}

Mesh Mesh::with_vertices(Tensor vertices) const {
  if (vertices.shape() != vertices_.shape()) {
    throw GeometryError("mesh: replacement vertices " + ad::shape_str(vertices.shape()) +
                        " do not match " + ad::shape_str(vertices_.shape()));
  }
  Mesh m;
  m.vertices_ = std::move(vertices);
  m.faces_ = faces_;
  return m;
}

Viewpoint Viewpoint::make(double azimuth_deg, double elevation_deg, double distance) {
  if (!std::isfinite(azimuth_deg) || !std::isfinite(elevation_deg) ||
      !std::isfinite(distance)) {
    throw GeometryError("viewpoint: non-finite component");
  }
  if (elevation_deg < -90.0 || elevation_deg > 90.0) {
    throw GeometryError("viewpoint: elevation " + std::to_string(elevation_deg) +
                        " outside [-90, 90]");
  }
  if (distance <= 0.0) throw GeometryError("viewpoint: distance must be positive");
  double az = std::fmod(azimuth_deg, 360.0);
  if (az < 0.0) az += 360.0;
  if (az >= 360.0) az = 0.0;
  return {az, elevation_deg, distance};
}

CameraPose viewpoint_to_camera(const Viewpoint& vp_in) {
  const Viewpoint vp =
      Viewpoint::make(vp_in.azimuth_deg, vp_in.elevation_deg, vp_in.distance);
  const double az = deg2rad(vp.azimuth_deg), el = deg2rad(vp.elevation_deg);
  CameraPose cam;
  cam.eye = vp.distance *
            Eigen::Vector3d(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));

  const Eigen::Vector3d forward = -cam.eye.normalized();
  Eigen::Vector3d up(0.0, 1.0, 0.0);
  if (forward.cross(up).norm() < 1e-9) up = Eigen::Vector3d(0.0, 0.0, 1.0);
  const Eigen::Vector3d right = forward.cross(up).normalized();
  const Eigen::Vector3d true_up = right.cross(forward);
  cam.rotation.row(0) = right.transpose();
  cam.rotation.row(1) = true_up.transpose();
  cam.rotation.row(2) = -forward.transpose();
  return cam;
}

Tensor project(const Tensor& vertices, const CameraPose& cam, int image_size) {
  if (vertices.rank() != 2 || vertices.dim(1) != 3) {
    throw GeometryError("project: vertices must be (V,3), got " +
                        ad::shape_str(vertices.shape()));
  }
  if (image_size <= 0) throw GeometryError("project: image size must be positive");
  const Tensor eye({3}, {cam.eye.x(), cam.eye.y(), cam.eye.z()});
  std::vector<double> rt(9);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rt[r * 3 + c] = cam.rotation(c, r);
  const Tensor cam_coords = ad::matmul(vertices - eye, Tensor({3, 3}, rt));

  const Tensor x = ad::slice(cam_coords, 1, 0, 1);
  const Tensor y = ad::slice(cam_coords, 1, 1, 2);
  const Tensor depth = -ad::slice(cam_coords, 1, 2, 3);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (!(depth[i] > cam.near)) {
      throw GeometryError("project: vertex " + std::to_string(i) + " at depth " +
                          std::to_string(depth[i]) + " is not beyond the near plane");
    }
  }
  const double size = image_size;
  const double focal = 0.5 * size / std::tan(deg2rad(cam.fov_deg) * 0.5);
  const double center = 0.5 * (size - 1.0);
  const Tensor px = center + focal * (x / depth);
  const Tensor py = center - focal * (y / depth);
  return ad::concat({px, py, depth}, 1);
}

double SparseMatrix::at(std::size_t r, std::size_t c) const {
  for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
    if (col_idx[k] == c) return values[k];
  return 0.0;
}

std::vector<double> SparseMatrix::to_dense() const {
  std::vector<double> d(rows * cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) d[r * cols + col_idx[k]] += values[k];
  return d;
}

SparseMatrix uniform_laplacian(const Mesh& mesh) {
  const std::size_t n = mesh.num_vertices();
  std::vector<std::set<std::size_t>> nbrs(n);
  for (const auto& f : mesh.faces()) {
    for (int e = 0; e < 3; ++e) {
      const auto a = f[e], b = f[(e + 1) % 3];
      nbrs[a].insert(b);
      nbrs[b].insert(a);
    }
  }
  SparseMatrix m;
  m.rows = m.cols = n;
  m.row_ptr.push_back(0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!nbrs[i].empty()) {
      const double w = -1.0 / static_cast<double>(nbrs[i].size());
      bool diag_done = false;
      for (auto j : nbrs[i]) {
        if (!diag_done && j > i) {
          m.col_idx.push_back(i);
          m.values.push_back(1.0);
          diag_done = true;
        }
        m.col_idx.push_back(j);
        m.values.push_back(w);
      }
      if (!diag_done) {
        m.col_idx.push_back(i);
        m.values.push_back(1.0);
      }
    }
    m.row_ptr.push_back(m.col_idx.size());
  }
  return m;
}

Tensor sparse_matmul(const SparseMatrix& m, const Tensor& x) {
  if (x.rank() != 2 || x.dim(0) != m.cols) {
    throw ad::AdError("sparse_matmul: shape mismatch (" + std::to_string(m.rows) + "," +
                      std::to_string(m.cols) + ") vs " + ad::shape_str(x.shape()));
  }
  const std::size_t k = x.dim(1);
  std::vector<double> out(m.rows * k, 0.0);
  const auto& xv = x.vec();
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t p = m.row_ptr[r]; p < m.row_ptr[r + 1]; ++p)
      for (std::size_t c = 0; c < k; ++c) out[r * k + c] += m.values[p] * xv[m.col_idx[p] * k + c];
  auto mat = std::make_shared<SparseMatrix>(m);
  return ad::Tape::record("sparse_matmul", {x}, Tensor({m.rows, k}, std::move(out)),
                          [mat, k](std::span<const double> g, ad::GradSinks& in) {
                            for (std::size_t r = 0; r < mat->rows; ++r)
                              for (std::size_t p = mat->row_ptr[r]; p < mat->row_ptr[r + 1]; ++p)
                                for (std::size_t c = 0; c < k; ++c)
                                  in[0][mat->col_idx[p] * k + c] += mat->values[p] * g[r * k + c];
                          });
}

Mesh make_icosphere(int subdivisions) {
  if (subdivisions < 0 || subdivisions > 4) {
    throw GeometryError("icosphere: subdivisions " + std::to_string(subdivisions) +
                        " outside [0, 4]");
  }
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> v = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<Face> faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                             {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                             {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                             {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> midpoint;
    auto mid = [&](std::uint32_t a, std::uint32_t b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      v.push_back(((v[a] + v[b]) * 0.5).normalized());
      const auto idx = static_cast<std::uint32_t>(v.size() - 1);
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Face> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const auto a = mid(f[0], f[1]), b = mid(f[1], f[2]), c = mid(f[2], f[0]);
      next.push_back({f[0], a, c});
      next.push_back({f[1], b, a});
      next.push_back({f[2], c, b});
      next.push_back({a, b, c});
    }
    faces = std::move(next);
  }
  return Mesh(v, std::move(faces));
}

std::size_t count_boundary_edges(const Mesh& mesh) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> uses;
  for (const auto& f : mesh.faces())
    for (int e = 0; e < 3; ++e) ++uses[std::minmax(f[e], f[(e + 1) % 3])];
  std::size_t n = 0;
  for (const auto& [edge, count] : uses) n += (count == 1);
  return n;
}

}  // namespace ssr::geometry
