#pragma once

// Meshes, viewpoints and the camera model.
//
// World frame is y-up. A viewpoint's azimuth rotates the camera about +y
// starting from +z, elevation lifts it above the xz-plane, and the camera
// always looks at the origin. Image rows grow downwards; pixel (row i,
// col j) has its center at (x = j, y = i).

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "ssr/tensor.hpp"

namespace ssr::geometry {

using ad::Tensor;

inline constexpr double kFovDeg = 30.0;
inline constexpr double kNearPlane = 0.1;
inline constexpr double kDefaultDistance = 2.732;

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Face = std::array<std::uint32_t, 3>;

/// Triangle mesh. Vertices live in a (V,3) tensor so they can be tracked.
class Mesh {
 public:
  Mesh();
  Mesh(Tensor vertices, std::vector<Face> faces);
  Mesh(const std::vector<Eigen::Vector3d>& vertices, std::vector<Face> faces);

  const Tensor& vertices() const { return vertices_; }
  const std::vector<Face>& faces() const { return faces_; }
  std::size_t num_vertices() const { return vertices_.dim(0); }
  std::size_t num_faces() const { return faces_.size(); }
  Eigen::Vector3d vertex(std::size_t i) const;

  /// Same topology, new positions.
  Mesh with_vertices(Tensor vertices) const;

 private:
  Tensor vertices_;
  std::vector<Face> faces_;
};

struct Viewpoint {
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;
  double distance = kDefaultDistance;

  /// Validates and wraps azimuth into [0, 360).
  static Viewpoint make(double azimuth_deg, double elevation_deg, double distance);
  bool operator==(const Viewpoint&) const = default;
};

struct CameraPose {
  Eigen::Vector3d eye = Eigen::Vector3d::Zero();
  /// World-to-camera rotation; rows are right, up and backward axes.
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  double fov_deg = kFovDeg;
  double near = kNearPlane;
};

CameraPose viewpoint_to_camera(const Viewpoint& vp);

/// Perspective projection to (x_pixel, y_pixel, depth) per vertex.
/// Throws GeometryError naming the first vertex at or behind the near plane.
Tensor project(const Tensor& vertices, const CameraPose& cam, int image_size);
inline Tensor project(const Mesh& mesh, const CameraPose& cam, int image_size) {
  return project(mesh.vertices(), cam, image_size);
}

/// Row-compressed sparse matrix.
struct SparseMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<std::size_t> col_idx;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const;
  std::vector<double> to_dense() const;
};

/// L = I - D^-1 A over the edge graph; isolated vertices give zero rows.
SparseMatrix uniform_laplacian(const Mesh& mesh);

/// L (V,V) times X (V,k), differentiable in X.
Tensor sparse_matmul(const SparseMatrix& m, const Tensor& x);

/// Unit-radius icosphere; subdivisions in [0, 4].
Mesh make_icosphere(int subdivisions);

/// Edges used by exactly one face (empty for a closed manifold).
std::size_t count_boundary_edges(const Mesh& mesh);

Mesh read_obj(std::istream& in);
Mesh load_obj(const std::filesystem::path& path);
void write_obj(const Mesh& mesh, std::ostream& out);
void save_obj(const Mesh& mesh, const std::filesystem::path& path);

}  // namespace ssr::geometry
