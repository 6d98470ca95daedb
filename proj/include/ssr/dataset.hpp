#pragma once

// Synthetic multi-view silhouette dataset: parametric shape families rendered
// from a fixed 24-view ring, PGM masks, OBJ meshes and a JSON manifest.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ssr/geometry.hpp"
#include "ssr/rasterizer.hpp"

namespace ssr::data {

namespace fs = std::filesystem;
using geometry::Mesh;
using geometry::Viewpoint;
using raster::SilhouetteImage;

inline constexpr int kNumViews = 24;
inline constexpr double kGridElevation = 30.0;
inline constexpr int kDefaultImageSize = 64;

/// Azimuth 0, 15, ..., 345 at elevation 30 and the default camera distance.
std::vector<Viewpoint> canonical_viewpoints();
/// Index of vp in the canonical grid, or -1.
int viewpoint_index(const Viewpoint& vp);

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Family { box, ellipsoid, cylinder, torus, bracket };

struct ClassSpec {
  std::string name;
  Family family;
};

/// One class per family, named after it.
std::vector<ClassSpec> default_classes();
ClassSpec class_by_name(const std::string& name);

/// Closed, outward-wound mesh of the family with randomized dimensions,
/// already placed at the family's fixed offset from the origin.
Mesh make_shape(Family family, std::mt19937_64& rng);

struct ViewRecord {
  Viewpoint viewpoint;
  int index = 0;
  fs::path mask;  // relative to the dataset root
};

struct ObjectRecord {
  std::string object_id;
  std::string class_name;
  fs::path mesh;  // relative to the dataset root
  std::vector<ViewRecord> views;
};

struct SplitManifest {
  std::vector<std::string> train, val, test;
  std::vector<std::string> labeled;  // subset of train
};

struct Dataset {
  fs::path root;
  std::vector<std::string> classes;
  std::vector<ObjectRecord> objects;
  SplitManifest splits;
  int image_size = kDefaultImageSize;
  std::uint64_t seed = 0;

  const ObjectRecord& object(const std::string& id) const;
  int class_index(const std::string& name) const;

  void save_manifest() const;  // root / manifest.json
  static Dataset load(const fs::path& manifest_path);
};

/// Renders every object at all 24 viewpoints into root/masks, meshes into
/// root/meshes, and writes root/manifest.json with splits from make_splits.
Dataset generate_synthetic(const std::vector<ClassSpec>& classes, int n_objects_per_class, std::uint64_t seed,
                           const fs::path& out_dir, int n_labeled = 2, int image_size = kDefaultImageSize);

/// Per class: 70/10/20 object-wise split of a seeded shuffle; the first
/// n_labeled train objects are labeled, so smaller labeled sets are nested in
/// larger ones for the same seed.
SplitManifest make_splits(const std::vector<ObjectRecord>& objects, std::uint64_t seed, int n_labeled);

/// Binary PGM (P5, maxval 255, square).
SilhouetteImage load_mask(const fs::path& path);
void save_mask(const SilhouetteImage& img, const fs::path& path);
SilhouetteImage parse_pgm(const std::string& bytes, const std::string& source = "pgm");
std::string encode_pgm(const SilhouetteImage& img);

/// Masks rendered with hard_rasterize for one mesh at the given viewpoint.
SilhouetteImage render_mask(const Mesh& mesh, const Viewpoint& vp, int image_size);

}  // namespace ssr::data
