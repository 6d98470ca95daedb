#pragma once

// Voxel occupancy, 3D IoU and the per-class test protocol.

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ssr/dataset.hpp"
#include "ssr/geometry.hpp"
#include "ssr/reconstructor.hpp"

namespace ssr::eval {

using geometry::Mesh;

struct Bounds {
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(-1.0);
  Eigen::Vector3d hi = Eigen::Vector3d::Constant(1.0);
  bool operator==(const Bounds&) const = default;
};

/// Smallest cube holding both meshes' bounding boxes, grown by pad on each
/// side relative to its edge length.
Bounds union_cube(const Mesh& a, const Mesh& b, double pad = 0.05);

struct VoxelGrid {
  int resolution = 0;
  Bounds bounds;
  std::vector<std::uint8_t> occupancy;  // x fastest, then y, then z
  std::vector<std::string> warnings;

  bool at(int ix, int iy, int iz) const {
    return occupancy[(static_cast<std::size_t>(iz) * resolution + iy) * resolution + ix] != 0;
  }
  std::size_t count() const;
  double fraction() const { return occupancy.empty() ? 0.0 : double(count()) / occupancy.size(); }
};

/// A voxel is occupied iff its center is inside the mesh by +x ray parity.
/// Open meshes add a warning to the grid but are still voxelized.
VoxelGrid voxelize(const Mesh& mesh, int resolution, const Bounds& bounds);

/// |a and b| / |a or b|, 1 when both are empty. Grids must share resolution
/// and bounds.
double iou3d(const VoxelGrid& a, const VoxelGrid& b);

/// IoU of two meshes voxelized over their union_cube.
double mesh_iou(const Mesh& pred, const Mesh& truth, int resolution);

struct ObjectScore {
  std::string class_name;
  std::string object_id;
  double mean_view_iou = 0.0;
};

struct EvalReport {
  std::vector<ObjectScore> objects;
  std::vector<std::string> classes;         // in dataset order, only those present
  std::map<std::string, double> per_class;  // mean over the class's objects
  double mean = 0.0;                        // mean over all objects
};

/// Reconstructs every view of each listed object, voxelizes prediction and
/// ground truth, and averages IoU over views, then objects, then classes.
EvalReport test_iou(const recon::Reconstructor& model, const data::Dataset& ds,
                    const std::vector<std::string>& object_ids, int resolution = 32);

/// columns: class, object_id, mean_view_iou
void write_eval_csv(const EvalReport& report, const std::filesystem::path& path);

}  // namespace ssr::eval
