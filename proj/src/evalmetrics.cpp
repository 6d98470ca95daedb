#include "ssr/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ssr::eval {
namespace {

// Ray origins are nudged off the voxel-center lattice so a ray never passes
// exactly through a vertex or along an edge of an axis-aligned face.
constexpr double kJitterY = 1e-9;
constexpr double kJitterZ = 0.7548776662e-9;

void extend(Eigen::Vector3d& lo, Eigen::Vector3d& hi, const Mesh& m) {
  for (std::size_t i = 0; i < m.num_vertices(); ++i) {
    lo = lo.cwiseMin(m.vertex(i));
    hi = hi.cwiseMax(m.vertex(i));
  }
}

}  // namespace

Bounds union_cube(const Mesh& a, const Mesh& b, double pad) {
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(INFINITY), hi = -lo;
  extend(lo, hi, a);
  extend(lo, hi, b);
  if (!(lo.array() <= hi.array()).all()) return {};  // both empty
  const Eigen::Vector3d mid = 0.5 * (lo + hi);
  double half = 0.5 * (hi - lo).maxCoeff();
  if (half <= 0.0) half = 0.5;
  half *= 1.0 + 2.0 * pad;
  return {mid.array() - half, mid.array() + half};
}

std::size_t VoxelGrid::count() const {
  return static_cast<std::size_t>(std::count(occupancy.begin(), occupancy.end(), std::uint8_t{1}));
}

VoxelGrid voxelize(const Mesh& mesh, int resolution, const Bounds& bounds) {
  if (resolution <= 0) throw std::invalid_argument("voxelize: resolution must be positive");
  if (!((bounds.hi - bounds.lo).array() > 0.0).all())
    throw std::invalid_argument("voxelize: degenerate bounds");
  const int R = resolution;
  VoxelGrid grid{R, bounds, std::vector<std::uint8_t>(static_cast<std::size_t>(R) * R * R, 0), {}};
  if (const auto open = geometry::count_boundary_edges(mesh))
    grid.warnings.push_back("voxelize: mesh is not closed (" + std::to_string(open) + " boundary edges)");

  const Eigen::Vector3d step = (bounds.hi - bounds.lo) / R;
  auto center = [&](int axis, int i) { return bounds.lo[axis] + (i + 0.5) * step[axis]; };

  struct Tri {
    Eigen::Vector3d a, b, c;
    double ylo, yhi, zlo, zhi;
  };
  std::vector<Tri> tris;
  for (const auto& f : mesh.faces()) {
    Tri t{mesh.vertex(f[0]), mesh.vertex(f[1]), mesh.vertex(f[2]), 0, 0, 0, 0};
    t.ylo = std::min({t.a.y(), t.b.y(), t.c.y()});
    t.yhi = std::max({t.a.y(), t.b.y(), t.c.y()});
    t.zlo = std::min({t.a.z(), t.b.z(), t.c.z()});
    t.zhi = std::max({t.a.z(), t.b.z(), t.c.z()});
    tris.push_back(t);
  }

  std::vector<double> hits;
  for (int iz = 0; iz < R; ++iz) {
    const double z = center(2, iz) + kJitterZ;
    for (int iy = 0; iy < R; ++iy) {
      const double y = center(1, iy) + kJitterY;
      hits.clear();
      for (const auto& t : tris) {
        if (y < t.ylo || y > t.yhi || z < t.zlo || z > t.zhi) continue;
        // barycentric coordinates of (y, z) in the yz-projection
        const double d = (t.b.y() - t.a.y()) * (t.c.z() - t.a.z()) - (t.c.y() - t.a.y()) * (t.b.z() - t.a.z());
        if (d == 0.0) continue;
        const double u = ((y - t.a.y()) * (t.c.z() - t.a.z()) - (t.c.y() - t.a.y()) * (z - t.a.z())) / d;
        const double v = ((t.b.y() - t.a.y()) * (z - t.a.z()) - (y - t.a.y()) * (t.b.z() - t.a.z())) / d;
        if (u < 0.0 || v < 0.0 || u + v > 1.0) continue;
        hits.push_back(t.a.x() + u * (t.b.x() - t.a.x()) + v * (t.c.x() - t.a.x()));
      }
      if (hits.empty()) continue;
      std::sort(hits.begin(), hits.end());
      // parity of crossings strictly to the +x side of each center
      std::size_t k = 0;
      for (int ix = 0; ix < R; ++ix) {
        const double x = center(0, ix);
        while (k < hits.size() && hits[k] <= x) ++k;
        if ((hits.size() - k) % 2 == 1)
          grid.occupancy[(static_cast<std::size_t>(iz) * R + iy) * R + ix] = 1;
      }
    }
  }
  return grid;
}

double iou3d(const VoxelGrid& a, const VoxelGrid& b) {
  if (a.resolution != b.resolution || !(a.bounds == b.bounds) || a.occupancy.size() != b.occupancy.size())
    throw std::invalid_argument("iou3d: grids differ in resolution or bounds");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.occupancy.size(); ++i) {
    inter += a.occupancy[i] & b.occupancy[i];
    uni += a.occupancy[i] | b.occupancy[i];
  }
  return uni == 0 ? 1.0 : double(inter) / double(uni);
}

double mesh_iou(const Mesh& pred, const Mesh& truth, int resolution) {
  const Bounds bounds = union_cube(pred, truth);
  return iou3d(voxelize(pred, resolution, bounds), voxelize(truth, resolution, bounds));
}

EvalReport test_iou(const recon::Reconstructor& model, const data::Dataset& ds,
                    const std::vector<std::string>& object_ids, int resolution) {
  EvalReport report;
  std::map<std::string, std::pair<double, int>> sums;
  for (const auto& id : object_ids) {
    const auto& obj = ds.object(id);
    const Mesh truth = geometry::load_obj(ds.root / obj.mesh);
    std::vector<raster::SilhouetteImage> views;
    for (const auto& v : obj.views) views.push_back(data::load_mask(ds.root / v.mask));
    const auto preds = model.reconstruct_batch(model.params(), views);
    double total = 0.0;
    for (const auto& p : preds) total += mesh_iou(p, truth, resolution);
    const double mean = total / static_cast<double>(preds.size());
    report.objects.push_back({obj.class_name, id, mean});
    auto& s = sums[obj.class_name];
    s.first += mean;
    s.second += 1;
  }
  double all = 0.0;
  for (const auto& cls : ds.classes) {
    auto it = sums.find(cls);
    if (it == sums.end()) continue;
    report.classes.push_back(cls);
    report.per_class[cls] = it->second.first / it->second.second;
  }
  for (const auto& o : report.objects) all += o.mean_view_iou;
  report.mean = report.objects.empty() ? 0.0 : all / static_cast<double>(report.objects.size());
  return report;
}

void write_eval_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("eval: cannot write " + path.string());
  out << "class,object_id,mean_view_iou\n";
  char buf[32];
  for (const auto& o : report.objects) {
    std::snprintf(buf, sizeof buf, "%.6f", o.mean_view_iou);
    out << o.class_name << ',' << o.object_id << ',' << buf << '\n';
  }
  if (!out) throw std::runtime_error("eval: write failed for " + path.string());
}

}  // namespace ssr::eval
