#include "ssr/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ssr::raster {
namespace {

// Beyond d^2 / sigma = kCutoff an outside face contributes D < 4e-18.
constexpr double kCutoff = 40.0;

struct P2 {
  double x, y;
};

double cross(P2 a, P2 b, P2 p) { return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x); }

struct EdgeHit {
  double d2;
  double t;
  P2 r;  // p - closest point
  int edge;
};

// Screen triangle with per-edge constants hoisted out of the pixel loop.
struct FaceGeom {
  P2 v[3];
  P2 e[3];          // v[k+1] - v[k]
  double inv_len2[3];  // 0 for a zero-length edge
  double orient;    // sign of the signed area; 0 if degenerate

  explicit FaceGeom(const P2 (&pts)[3]) {
    for (int k = 0; k < 3; ++k) {
      v[k] = pts[k];
      e[k] = {pts[(k + 1) % 3].x - pts[k].x, pts[(k + 1) % 3].y - pts[k].y};
      const double len2 = e[k].x * e[k].x + e[k].y * e[k].y;
      inv_len2[k] = len2 > 0.0 ? 1.0 / len2 : 0.0;
    }
    const double area = cross(v[0], v[1], v[2]);
    orient = area > 0 ? 1.0 : (area < 0 ? -1.0 : 0.0);
  }

  EdgeHit closest_edge(P2 p) const {
    EdgeHit best{INFINITY, 0.0, {0, 0}, 0};
    for (int k = 0; k < 3; ++k) {
      const double ax = p.x - v[k].x, ay = p.y - v[k].y;
      const double t = std::clamp((ax * e[k].x + ay * e[k].y) * inv_len2[k], 0.0, 1.0);
      const P2 r{ax - t * e[k].x, ay - t * e[k].y};
      const double d2 = r.x * r.x + r.y * r.y;
      if (d2 < best.d2) best = {d2, t, r, k};
    }
    return best;
  }

  // Strict: points on an edge are outside. A degenerate face has no interior.
  bool strictly_inside(P2 p) const {
    if (orient == 0.0) return false;
    for (int k = 0; k < 3; ++k) {
      if (orient * (e[k].x * (p.y - v[k].y) - e[k].y * (p.x - v[k].x)) <= 0.0) return false;
    }
    return true;
  }
};

double stable_sigmoid(double s) {
  if (s >= 0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

void check_inputs(const Tensor& projected, const std::vector<Face>& faces, int size) {
  if (projected.rank() != 2 || projected.dim(1) != 3) {
    throw std::invalid_argument("rasterize: projected vertices must be (V,3), got " +
                                ad::shape_str(projected.shape()));
  }
  if (size <= 0) throw std::invalid_argument("rasterize: image size must be positive");
  const std::size_t nv = projected.dim(0);
  for (const auto& f : faces)
    for (auto i : f)
      if (i >= nv) throw std::invalid_argument("rasterize: face index out of range");
  for (double v : projected.values())
    if (!std::isfinite(v)) throw std::invalid_argument("rasterize: non-finite projected coordinate");
}

// Calls visit(face_index, face, pixel_index, pixel_center) for every pixel
// whose center lies within margin of the face's bounding box.
template <class Visit>
void for_each_covered(const std::vector<double>& xyz, const std::vector<Face>& faces, int size,
                      double margin, Visit&& visit) {
  for (std::size_t f = 0; f < faces.size(); ++f) {
    P2 pts[3];
    for (int k = 0; k < 3; ++k) pts[k] = {xyz[3 * faces[f][k]], xyz[3 * faces[f][k] + 1]};
    const double x0 = std::min({pts[0].x, pts[1].x, pts[2].x}) - margin;
    const double x1 = std::max({pts[0].x, pts[1].x, pts[2].x}) + margin;
    const double y0 = std::min({pts[0].y, pts[1].y, pts[2].y}) - margin;
    const double y1 = std::max({pts[0].y, pts[1].y, pts[2].y}) + margin;
    if (x1 < 0 || y1 < 0 || x0 > size - 1 || y0 > size - 1) continue;
    const int c0 = std::max(0, static_cast<int>(std::ceil(x0)));
    const int c1 = std::min(size - 1, static_cast<int>(std::floor(x1)));
    const int r0 = std::max(0, static_cast<int>(std::ceil(y0)));
    const int r1 = std::min(size - 1, static_cast<int>(std::floor(y1)));
    const FaceGeom face(pts);
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c)
        visit(f, face, static_cast<std::size_t>(r) * size + c, P2{double(c), double(r)});
  }
}

// Once a pixel's emptiness prod_j (1 - D_j) drops below this, 1 - prod
// rounds to 1 and every further contribution and gradient is below double
// resolution.
constexpr double kSaturated = 1e-26;

}  // namespace

SilhouetteImage::SilhouetteImage(int size, Tensor values) : size_(size), values_(std::move(values)) {
  if (size <= 0 || values_.shape() != ad::Shape{std::size_t(size), std::size_t(size)}) {
    throw std::invalid_argument("silhouette: expected (" + std::to_string(size) + "," +
                                std::to_string(size) + ") values, got " +
                                ad::shape_str(values_.shape()));
  }
  for (double v : values_.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("silhouette: value outside [0, 1]");
  }
}

SilhouetteImage SilhouetteImage::zeros(int size) {
  return SilhouetteImage(size, Tensor::zeros({std::size_t(size), std::size_t(size)}));
}

SoftRasterSettings SoftRasterSettings::defaults(int image_size) {
  return {1e-4 * image_size * image_size, image_size};
}

SilhouetteImage soft_rasterize(const Tensor& projected, const std::vector<Face>& faces,
                               const SoftRasterSettings& settings) {
  const int size = settings.image_size;
  check_inputs(projected, faces, size);
  if (!(settings.sigma > 0.0)) throw std::invalid_argument("soft_rasterize: sigma must be positive");
  const double sigma = settings.sigma;
  const double margin = std::sqrt(kCutoff * sigma);
  const std::size_t npix = static_cast<std::size_t>(size) * size;

  // Per pixel emptiness E = prod_j (1 - D_j), with 1 - D_j = 1 / (1 + exp(s_j)).
  auto empty = std::make_shared<std::vector<double>>(npix, 1.0);
  auto& E = *empty;
  const double cutoff = kCutoff * sigma;
  for_each_covered(projected.vec(), faces, size, margin,
                   [&](std::size_t, const FaceGeom& face, std::size_t pix, P2 p) {
                     if (E[pix] < kSaturated) return;
                     const EdgeHit hit = face.closest_edge(p);
                     const bool inside = face.strictly_inside(p);
                     if (!inside && hit.d2 > cutoff) return;
                     E[pix] /= 1.0 + std::exp((inside ? hit.d2 : -hit.d2) / sigma);
                   });

  std::vector<double> img(npix);
  for (std::size_t i = 0; i < npix; ++i) img[i] = 1.0 - E[i];
  Tensor out({std::size_t(size), std::size_t(size)}, std::move(img));

  auto xyz_keep = projected.storage();
  auto faces_keep = std::make_shared<const std::vector<Face>>(faces);
  out = ad::Tape::record(
      "soft_rasterize", {projected}, std::move(out),
      [xyz_keep, faces_keep, empty, size, sigma, margin](std::span<const double> g,
                                                         ad::GradSinks& in) {
        auto& grad = in[0];
        const auto& E = *empty;
        // g * prod_j(1 - D_j), zero where it cannot matter
        std::vector<double> scale(E.size(), 0.0);
        for (std::size_t i = 0; i < E.size(); ++i)
          if (E[i] >= kSaturated) scale[i] = g[i] * E[i];
        const double cutoff = kCutoff * sigma;
        for_each_covered(*xyz_keep, *faces_keep, size, margin,
                         [&](std::size_t f, const FaceGeom& face, std::size_t pix, P2 p) {
                           if (scale[pix] == 0.0) return;
                           const EdgeHit hit = face.closest_edge(p);
                           const bool inside = face.strictly_inside(p);
                           if (!inside && hit.d2 > cutoff) return;
                           const double sign = inside ? 1.0 : -1.0;
                           // dI/ds = prod_j(1 - D_j) * sigmoid(s), ds/d(d^2) = sign / sigma
                           const double k = scale[pix] * stable_sigmoid(sign * hit.d2 / sigma) * sign / sigma;
                           // d(d^2)/da = -2 r (1 - t), d(d^2)/db = -2 r t
                           const auto ia = (*faces_keep)[f][hit.edge];
                           const auto ib = (*faces_keep)[f][(hit.edge + 1) % 3];
                           const double wa = -2.0 * (1.0 - hit.t) * k, wb = -2.0 * hit.t * k;
                           grad[3 * ia] += wa * hit.r.x;
                           grad[3 * ia + 1] += wa * hit.r.y;
                           grad[3 * ib] += wb * hit.r.x;
                           grad[3 * ib + 1] += wb * hit.r.y;
                         });
      });
  return SilhouetteImage(size, std::move(out));
}

SilhouetteImage hard_rasterize(const Tensor& projected, const std::vector<Face>& faces,
                               int image_size) {
  check_inputs(projected, faces, image_size);
  const std::size_t npix = static_cast<std::size_t>(image_size) * image_size;
  std::vector<double> img(npix, 0.0);
  for_each_covered(projected.vec(), faces, image_size, 0.0,
                   [&](std::size_t, const FaceGeom& face, std::size_t pix, P2 p) {
                     if (img[pix] == 1.0 || face.orient == 0.0) return;
                     bool in = true;
                     for (int k = 0; k < 3 && in; ++k)
                       in = face.orient * cross(face.v[k], face.v[(k + 1) % 3], p) >= 0.0;
                     if (in) img[pix] = 1.0;
                   });
  return SilhouetteImage(image_size,
                         Tensor({std::size_t(image_size), std::size_t(image_size)}, std::move(img)));
}

}  // namespace ssr::raster
