#include "ssr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "ssr/rng.hpp"

namespace ssr::data {
namespace {

using Eigen::Vector3d;
using geometry::Face;
using json = nlohmann::json;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Prism over a counterclockwise polygon in the xy-plane, z in [-half_depth, half_depth].
// cap lists triangles of the polygon (counterclockwise).
Mesh extrude(const std::vector<Eigen::Vector2d>& poly, const std::vector<Face>& cap, double half_depth) {
  const auto n = static_cast<std::uint32_t>(poly.size());
  std::vector<Vector3d> v;
  for (const auto& p : poly) v.emplace_back(p.x(), p.y(), -half_depth);
  for (const auto& p : poly) v.emplace_back(p.x(), p.y(), half_depth);
  std::vector<Face> f;
  for (const auto& t : cap) {
    f.push_back({t[0] + n, t[1] + n, t[2] + n});  // front, +z
    f.push_back({t[0], t[2], t[1]});              // back, -z
  }
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t j = (i + 1) % n;
    f.push_back({i, j, j + n});
    f.push_back({i, j + n, i + n});
  }
  return Mesh(v, f);
}

std::vector<Face> fan(std::uint32_t n) {
  std::vector<Face> f;
  for (std::uint32_t i = 1; i + 1 < n; ++i) f.push_back({0, i, i + 1});
  return f;
}

Mesh transform(const Mesh& m, const Eigen::Matrix3d& r, const Vector3d& t) {
  std::vector<Vector3d> v;
  for (std::size_t i = 0; i < m.num_vertices(); ++i) v.push_back(r * m.vertex(i) + t);
  return Mesh(v, m.faces());
}

Mesh box(std::mt19937_64& rng) {
  const double a = uniform(rng, 0.22, 0.38), b = uniform(rng, 0.15, 0.26), c = uniform(rng, 0.15, 0.26);
  return extrude({{-a, -b}, {a, -b}, {a, b}, {-a, b}}, fan(4), c);
}

Mesh ellipsoid(std::mt19937_64& rng) {
  const Vector3d r(uniform(rng, 0.26, 0.38), uniform(rng, 0.19, 0.28), uniform(rng, 0.19, 0.28));
  const Mesh s = geometry::make_icosphere(2);
  return transform(s, r.asDiagonal(), Vector3d::Zero());
}

Mesh cylinder(std::mt19937_64& rng) {
  const double radius = uniform(rng, 0.14, 0.2), half_len = uniform(rng, 0.3, 0.42);
  constexpr int kSegments = 24;
  std::vector<Eigen::Vector2d> poly;
  for (int k = 0; k < kSegments; ++k) {
    const double th = 2.0 * std::numbers::pi * k / kSegments;
    poly.emplace_back(radius * std::cos(th), radius * std::sin(th));
  }
  // Built along z, turned so the axis runs along x.
  Eigen::Matrix3d r;
  r << 0, 0, 1, 0, 1, 0, -1, 0, 0;
  return transform(extrude(poly, fan(kSegments), half_len), r, Vector3d::Zero());
}

Mesh torus(std::mt19937_64& rng) {
  const double major = uniform(rng, 0.25, 0.32), minor = uniform(rng, 0.1, 0.13);
  constexpr std::uint32_t kRing = 24, kTube = 12;
  std::vector<Vector3d> v;
  for (std::uint32_t i = 0; i < kRing; ++i) {
    const double u = 2.0 * std::numbers::pi * i / kRing;
    for (std::uint32_t j = 0; j < kTube; ++j) {
      const double w = 2.0 * std::numbers::pi * j / kTube;
      const double rr = major + minor * std::cos(w);
      v.emplace_back(rr * std::cos(u), rr * std::sin(u), minor * std::sin(w));  // axis along z
    }
  }
  std::vector<Face> f;
  auto id = [&](std::uint32_t i, std::uint32_t j) { return (i % kRing) * kTube + (j % kTube); };
  for (std::uint32_t i = 0; i < kRing; ++i)
    for (std::uint32_t j = 0; j < kTube; ++j) {
      f.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      f.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  return Mesh(v, f);
}

Mesh bracket(std::mt19937_64& rng) {
  const double w = uniform(rng, 0.5, 0.7), h = uniform(rng, 0.45, 0.6), t = uniform(rng, 0.15, 0.2);
  const double half_depth = uniform(rng, 0.15, 0.22);
  const double cx = 0.5 * w, cy = 0.5 * h;
  const std::vector<Eigen::Vector2d> poly = {{-cx, -cy},        {w - cx, -cy}, {w - cx, t - cy},
                                             {t - cx, t - cy}, {t - cx, h - cy}, {-cx, h - cy}};
  return extrude(poly, {{0, 1, 2}, {0, 2, 3}, {0, 3, 5}, {3, 4, 5}}, half_depth);
}

// Every class sits at its own off-axis position so that no silhouette repeats
// under a half turn of the viewing ring.
Vector3d family_offset(Family f) {
  switch (f) {
    case Family::box: return {0.12, 0.0, 0.08};
    case Family::ellipsoid: return {-0.1, 0.0, 0.12};
    case Family::cylinder: return {0.08, 0.0, -0.12};
    case Family::torus: return {-0.12, 0.0, -0.06};
    case Family::bracket: return {0.1, 0.0, 0.1};
  }
  return Vector3d::Zero();
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DatasetError("write failed for " + p.string());
}

}  // namespace

std::vector<Viewpoint> canonical_viewpoints() {
  std::vector<Viewpoint> v;
  for (int k = 0; k < kNumViews; ++k) v.push_back(Viewpoint::make(15.0 * k, kGridElevation, geometry::kDefaultDistance));
  return v;
}

int viewpoint_index(const Viewpoint& vp) {
  const auto grid = canonical_viewpoints();
  for (int k = 0; k < kNumViews; ++k) {
    const auto& g = grid[k];
    if (std::abs(g.azimuth_deg - vp.azimuth_deg) < 1e-9 && std::abs(g.elevation_deg - vp.elevation_deg) < 1e-9 &&
        std::abs(g.distance - vp.distance) < 1e-9)
      return k;
  }
  return -1;
}

std::vector<ClassSpec> default_classes() {
  return {{"box", Family::box},
          {"ellipsoid", Family::ellipsoid},
          {"cylinder", Family::cylinder},
          {"torus", Family::torus},
          {"bracket", Family::bracket}};
}

ClassSpec class_by_name(const std::string& name) {
  for (const auto& c : default_classes())
    if (c.name == name) return c;
  throw DatasetError("unknown shape class '" + name + "' (known: box, ellipsoid, cylinder, torus, bracket)");
}

Mesh make_shape(Family family, std::mt19937_64& rng) {
  Mesh m;
  switch (family) {
    case Family::box: m = box(rng); break;
    case Family::ellipsoid: m = ellipsoid(rng); break;
    case Family::cylinder: m = cylinder(rng); break;
    case Family::torus: m = torus(rng); break;
    case Family::bracket: m = bracket(rng); break;
  }
  return transform(m, Eigen::Matrix3d::Identity(), family_offset(family));
}

SilhouetteImage render_mask(const Mesh& mesh, const Viewpoint& vp, int image_size) {
  const auto cam = geometry::viewpoint_to_camera(vp);
  return raster::hard_rasterize(geometry::project(mesh.vertices(), cam, image_size), mesh.faces(), image_size);
}

const ObjectRecord& Dataset::object(const std::string& id) const {
  for (const auto& o : objects)
    if (o.object_id == id) return o;
  throw DatasetError("no object '" + id + "' in dataset " + root.string());
}

int Dataset::class_index(const std::string& name) const {
  const auto it = std::find(classes.begin(), classes.end(), name);
  if (it == classes.end()) throw DatasetError("no class '" + name + "' in dataset " + root.string());
  return static_cast<int>(it - classes.begin());
}

SplitManifest make_splits(const std::vector<ObjectRecord>& objects, std::uint64_t seed, int n_labeled) {
  if (n_labeled < 0) throw DatasetError("make_splits: n_labeled must be non-negative");
  std::vector<std::string> class_order;
  std::map<std::string, std::vector<std::string>> per_class;
  for (const auto& o : objects) {
    if (!per_class.count(o.class_name)) class_order.push_back(o.class_name);
    per_class[o.class_name].push_back(o.object_id);
  }
  SplitManifest s;
  for (const auto& cls : class_order) {
    auto ids = per_class[cls];
    std::sort(ids.begin(), ids.end());
    auto rng = substream(seed, "splits/" + cls);
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto n = static_cast<int>(ids.size());
    const int n_train = static_cast<int>(std::lround(0.7 * n));
    const int n_val = std::min(n - n_train, static_cast<int>(std::lround(0.1 * n)));
    if (n_labeled > n_train) {
      throw DatasetError("make_splits: n_labeled " + std::to_string(n_labeled) + " exceeds the " +
                         std::to_string(n_train) + " training objects of class '" + cls + "'");
    }
    for (int i = 0; i < n; ++i) {
      if (i < n_train) {
        s.train.push_back(ids[i]);
        if (i < n_labeled) s.labeled.push_back(ids[i]);
      } else if (i < n_train + n_val) {
        s.val.push_back(ids[i]);
      } else {
        s.test.push_back(ids[i]);
      }
    }
  }
  return s;
}

Dataset generate_synthetic(const std::vector<ClassSpec>& classes, int n_objects_per_class, std::uint64_t seed,
                           const fs::path& out_dir, int n_labeled, int image_size) {
  if (classes.empty() || n_objects_per_class <= 0) throw DatasetError("generate: need at least one class and object");
  std::error_code ec;
  fs::create_directories(out_dir / "meshes", ec);
  if (ec) throw DatasetError("cannot create " + (out_dir / "meshes").string() + ": " + ec.message());
  fs::create_directories(out_dir / "masks", ec);
  if (ec) throw DatasetError("cannot create " + (out_dir / "masks").string() + ": " + ec.message());

  Dataset ds;
  ds.root = out_dir;
  ds.image_size = image_size;
  ds.seed = seed;
  const auto grid = canonical_viewpoints();
  for (const auto& cls : classes) {
    ds.classes.push_back(cls.name);
    for (int k = 0; k < n_objects_per_class; ++k) {
      char id[64];
      std::snprintf(id, sizeof id, "%s_%03d", cls.name.c_str(), k);
      auto rng = substream(seed, std::string("shape/") + id);
      const Mesh mesh = make_shape(cls.family, rng);
      ObjectRecord rec;
      rec.object_id = id;
      rec.class_name = cls.name;
      rec.mesh = fs::path("meshes") / (std::string(id) + ".obj");
      geometry::save_obj(mesh, out_dir / rec.mesh);
      fs::create_directories(out_dir / "masks" / id);
      for (int v = 0; v < kNumViews; ++v) {
        char name[32];
        std::snprintf(name, sizeof name, "v%02d.pgm", v);
        ViewRecord view{grid[v], v, fs::path("masks") / id / name};
        save_mask(render_mask(mesh, grid[v], image_size), out_dir / view.mask);
        rec.views.push_back(view);
      }
      ds.objects.push_back(std::move(rec));
    }
  }
  ds.splits = make_splits(ds.objects, seed, n_labeled);
  ds.save_manifest();
  return ds;
}

void Dataset::save_manifest() const {
  json j;
  j["classes"] = classes;
  j["seed"] = seed;
  j["objects"] = json::array();
  for (const auto& o : objects) {
    json views = json::array();
    for (const auto& v : o.views) {
      views.push_back({{"azimuth", v.viewpoint.azimuth_deg},
                       {"elevation", v.viewpoint.elevation_deg},
                       {"distance", v.viewpoint.distance},
                       {"index", v.index},
                       {"mask", v.mask.generic_string()}});
    }
    j["objects"].push_back(
        {{"object_id", o.object_id}, {"class", o.class_name}, {"mesh", o.mesh.generic_string()}, {"views", views}});
  }
  j["splits"] = {{"train", splits.train}, {"val", splits.val}, {"test", splits.test}, {"labeled", splits.labeled}};
  j["camera"] = {{"fov_deg", geometry::kFovDeg}, {"near", geometry::kNearPlane}, {"image_size", image_size}};
  j["renderer"] = {{"sigma_note", "masks are hard-rasterized (pixel center inside a triangle); training renders use "
                                  "soft rasterization with sigma = 1e-4 * image_size^2 unless configured"}};
  write_file(root / "manifest.json", j.dump(1) + "\n");
}

Dataset Dataset::load(const fs::path& manifest_path) {
  json j;
  try {
    j = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw DatasetError(manifest_path.string() + ": " + e.what());
  }
  Dataset ds;
  ds.root = manifest_path.parent_path();
  try {
    ds.classes = j.at("classes").get<std::vector<std::string>>();
    ds.seed = j.value("seed", std::uint64_t{0});
    ds.image_size = j.at("camera").at("image_size").get<int>();
    for (const auto& o : j.at("objects")) {
      ObjectRecord rec;
      rec.object_id = o.at("object_id").get<std::string>();
      rec.class_name = o.at("class").get<std::string>();
      rec.mesh = o.at("mesh").get<std::string>();
      if (!fs::exists(ds.root / rec.mesh)) throw DatasetError("missing mesh " + (ds.root / rec.mesh).string());
      for (const auto& v : o.at("views")) {
        ViewRecord vr;
        vr.viewpoint = Viewpoint::make(v.at("azimuth").get<double>(), v.at("elevation").get<double>(),
                                       v.at("distance").get<double>());
        vr.index = v.contains("index") ? v.at("index").get<int>() : viewpoint_index(vr.viewpoint);
        vr.mask = v.at("mask").get<std::string>();
        if (!fs::exists(ds.root / vr.mask)) throw DatasetError("missing mask " + (ds.root / vr.mask).string());
        rec.views.push_back(vr);
      }
      ds.objects.push_back(std::move(rec));
    }
    const auto& s = j.at("splits");
    ds.splits.train = s.at("train").get<std::vector<std::string>>();
    ds.splits.val = s.at("val").get<std::vector<std::string>>();
    ds.splits.test = s.at("test").get<std::vector<std::string>>();
    ds.splits.labeled = s.at("labeled").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw DatasetError(manifest_path.string() + ": malformed manifest: " + e.what());
  }
  return ds;
}

std::string encode_pgm(const SilhouetteImage& img) {
  const int n = img.size();
  std::string out = "P5\n" + std::to_string(n) + " " + std::to_string(n) + "\n255\n";
  for (double v : img.values().values()) out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  return out;
}

SilhouetteImage parse_pgm(const std::string& bytes, const std::string& source) {
  std::size_t pos = 0;
  auto fail = [&](const std::string& what) {
    throw DatasetError(source + ": " + what + " at byte " + std::to_string(pos));
  };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&](const char* what) {
    skip_space();
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (pos == start || pos - start > 9) {
      pos = start;
      fail(std::string("expected ") + what);
    }
    return std::stoi(bytes.substr(start, pos - start));
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') fail("missing P5 magic");
  pos = 2;
  const int w = read_int("width"), h = read_int("height"), maxval = read_int("maxval");
  if (w != h || w <= 0) fail("image must be square, got " + std::to_string(w) + "x" + std::to_string(h));
  if (maxval != 255) fail("maxval must be 255, got " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) fail("expected whitespace after header");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (bytes.size() - pos < n) fail("truncated pixel data");
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<unsigned char>(bytes[pos + i]) / 255.0;
  return SilhouetteImage(w, ad::Tensor({std::size_t(w), std::size_t(w)}, std::move(v)));
}

SilhouetteImage load_mask(const fs::path& path) { return parse_pgm(read_file(path), path.string()); }

void save_mask(const SilhouetteImage& img, const fs::path& path) { write_file(path, encode_pgm(img)); }

}  // namespace ssr::data
