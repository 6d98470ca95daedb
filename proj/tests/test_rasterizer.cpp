#include <doctest.h>

#include <cmath>
#include <random>

#include "ssr/geometry.hpp"
#include "ssr/rasterizer.hpp"
#include "support/gradcheck.hpp"

using namespace ssr::raster;
using ssr::ad::Tape;
using ssr::ad::Tensor;
using ssr::geometry::Face;

namespace {

Tensor pts(std::vector<std::array<double, 2>> xy) {
  std::vector<double> v;
  for (auto [x, y] : xy) v.insert(v.end(), {x, y, 1.0});
  return Tensor({xy.size(), 3}, std::move(v));
}

double sigmoid(double s) { return 1.0 / (1.0 + std::exp(-s)); }

// Icosphere level 0 splatted directly into a small frame, with jitter so no
// pixel center sits on a triangle's medial axis by construction.
Tensor splat_icosahedron(int size, double radius, std::mt19937_64& rng) {
  const auto ico = ssr::geometry::make_icosphere(0);
  std::uniform_real_distribution<double> jitter(-0.2, 0.2);
  std::vector<double> v;
  const double c = 0.5 * (size - 1);
  for (std::size_t i = 0; i < ico.num_vertices(); ++i) {
    const auto p = ico.vertex(i);
    v.insert(v.end(), {c + radius * p.x() + jitter(rng), c - radius * p.y() + jitter(rng), 3 + p.z()});
  }
  return Tensor({ico.num_vertices(), 3}, std::move(v));
}

}  // namespace

TEST_CASE("soft_rasterize saturates inside and outside") {
  const auto tri = pts({{-100, -100}, {200, -100}, {-100, 200}});
  const std::vector<Face> faces{{0, 1, 2}};
  auto img = soft_rasterize(tri, faces, {1e-4, 32});
  CHECK(std::abs(img.at(10, 10) - 1.0) < 1e-6);

  const auto small = pts({{0, 0}, {4, 0}, {0, 4}});
  img = soft_rasterize(small, faces, {1e-4, 32});
  CHECK(img.at(30, 30) < 1e-6);
  CHECK(img.at(20, 20) == 0.0);
}

TEST_CASE("pixel on a triangle edge gets exactly one half") {
  const auto tri = pts({{0, 0}, {10, 0}, {0, 10}});
  auto img = soft_rasterize(tri, {{0, 1, 2}}, {0.5, 16});
  CHECK(img.at(0, 5) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(img.at(5, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(img.at(5, 5) == doctest::Approx(0.5).epsilon(1e-15));  // hypotenuse
}

TEST_CASE("single face matches the sigmoid of signed squared distance") {
  const auto tri = pts({{2.3, 1.7}, {12.1, 3.2}, {4.4, 13.6}});
  const double sigma = 3.0;
  auto img = soft_rasterize(tri, {{0, 1, 2}}, {sigma, 16});
  // (row 6, col 6) is inside; nearest edge is found by brute force here.
  auto seg_d2 = [](double px, double py, double ax, double ay, double bx, double by) {
    double best = 1e300;
    for (int k = 0; k <= 200000; ++k) {
      const double t = k / 200000.0;
      const double dx = px - (ax + t * (bx - ax)), dy = py - (ay + t * (by - ay));
      best = std::min(best, dx * dx + dy * dy);
    }
    return best;
  };
  const double d2 = std::min({seg_d2(6, 6, 2.3, 1.7, 12.1, 3.2), seg_d2(6, 6, 12.1, 3.2, 4.4, 13.6),
                              seg_d2(6, 6, 4.4, 13.6, 2.3, 1.7)});
  CHECK(img.at(6, 6) == doctest::Approx(sigmoid(d2 / sigma)).epsilon(1e-6));
  // (row 1, col 12) is outside
  const double d2o = std::min({seg_d2(12, 1, 2.3, 1.7, 12.1, 3.2), seg_d2(12, 1, 12.1, 3.2, 4.4, 13.6),
                               seg_d2(12, 1, 4.4, 13.6, 2.3, 1.7)});
  CHECK(img.at(1, 12) == doctest::Approx(sigmoid(-d2o / sigma)).epsilon(1e-6));
}

TEST_CASE("faces combine by the product rule") {
  const auto v = pts({{0, 0}, {6, 0}, {0, 6}, {10, 10}, {15, 9}, {9, 15}});
  const std::vector<Face> faces{{0, 1, 2}, {3, 4, 5}};
  const SoftRasterSettings s{4.0, 16};
  auto both = soft_rasterize(v, faces, s);
  auto a = soft_rasterize(v, {faces[0]}, s);
  auto b = soft_rasterize(v, {faces[1]}, s);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c) {
      const double expect = 1 - (1 - a.at(r, c)) * (1 - b.at(r, c));
      CHECK(both.at(r, c) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("degenerate triangle acts as an outside segment") {
  const auto v = pts({{0, 0}, {4, 0}, {8, 0}});
  auto img = soft_rasterize(v, {{0, 1, 2}}, {4.0, 16});
  CHECK(img.at(2, 4) == doctest::Approx(sigmoid(-1.0)).epsilon(1e-12));
  CHECK(img.at(0, 3) == doctest::Approx(0.5).epsilon(1e-12));
  // Gradient still flows.
  Tape tape;
  auto x = tape.variable(v);
  auto loss = ssr::ad::sum(soft_rasterize(x, {{0, 1, 2}}, {4.0, 16}).values());
  auto g = tape.backward(loss).of(x);
  double norm = 0;
  for (double e : g.values()) {
    CHECK(std::isfinite(e));
    norm += e * e;
  }
  CHECK(norm > 0);
}

TEST_CASE("hard_rasterize covers full frame and empty meshes") {
  const auto big = pts({{-50, -50}, {100, -50}, {-50, 100}});
  auto full = hard_rasterize(big, {{0, 1, 2}}, 8);
  for (double x : full.values().values()) CHECK(x == 1.0);
  auto empty = hard_rasterize(big, {}, 8);
  for (double x : empty.values().values()) CHECK(x == 0.0);
  auto soft_empty = soft_rasterize(big, {}, SoftRasterSettings::defaults(8));
  for (double x : soft_empty.values().values()) CHECK(x == 0.0);
}

TEST_CASE("outside pixels brighten as sigma grows") {
  const auto tri = pts({{3, 3}, {9, 3}, {3, 9}});
  const std::vector<Face> faces{{0, 1, 2}};
  double prev = -1;
  for (double sigma : {0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 20.0}) {
    const double v = soft_rasterize(tri, faces, {sigma, 16}).at(12, 12);
    CHECK(v >= prev);
    prev = v;
  }
  CHECK(prev > 0.0);
}

TEST_CASE("shifting projected vertices by one pixel shifts the image") {
  std::mt19937_64 rng(3);
  const Tensor v = splat_icosahedron(24, 6.0, rng);
  const auto faces = ssr::geometry::make_icosphere(0).faces();
  std::vector<double> shifted = v.vec();
  for (std::size_t i = 0; i < shifted.size(); i += 3) {
    shifted[i] += 1.0;
    shifted[i + 1] += 1.0;
  }
  const SoftRasterSettings s{1.0, 24};
  auto a = soft_rasterize(v, faces, s);
  auto b = soft_rasterize(Tensor(v.shape(), shifted), faces, s);
  double worst = 0;
  for (int r = 1; r < 23; ++r)
    for (int c = 1; c < 23; ++c) worst = std::max(worst, std::abs(a.at(r - 1, c - 1) - b.at(r, c)));
  CHECK(worst < 1e-9);
}

TEST_CASE("soft_rasterize gradient matches finite differences") {
  std::mt19937_64 rng(11);
  const auto faces = ssr::geometry::make_icosphere(0).faces();
  const SoftRasterSettings s{1.0, 16};
  auto f = [&](const std::vector<Tensor>& in) { return soft_rasterize(in[0], faces, s).values(); };
  for (int rep = 0; rep < 4; ++rep) {
    const Tensor v = splat_icosahedron(16, 5.0, rng);
    // sum of the image
    Tape tape;
    auto x = tape.variable(v);
    auto g = tape.backward(ssr::ad::sum(f({x}))).of(x);
    double diff2 = 0, n2 = 0, a2 = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      auto eval = [&](double d) {
        auto w = v.vec();
        w[i] += d;
        return ssr::ad::sum(f({Tensor(v.shape(), w)})).item();
      };
      const double num = (eval(1e-4) - eval(-1e-4)) / 2e-4;
      diff2 += (num - g[i]) * (num - g[i]);
      n2 += num * num;
      a2 += g[i] * g[i];
    }
    CHECK(std::sqrt(diff2) / std::max(std::sqrt(n2), std::sqrt(a2)) < 1e-3);
    // randomly weighted pixels
    CHECK(ssr::testing::grad_check(f, {v}, rng, 1e-4).rel_error < 1e-3);
  }
}

TEST_CASE("hard and thresholded soft rasterization agree at small sigma") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> az(0, 360), el(-60, 60);
  const auto sphere = ssr::geometry::make_icosphere(2);
  std::size_t disagree = 0, total = 0;
  for (int i = 0; i < 10; ++i) {
    const auto cam = ssr::geometry::viewpoint_to_camera(ssr::geometry::Viewpoint::make(az(rng), el(rng), 2.732));
    const Tensor proj = ssr::geometry::project(sphere.vertices() * 0.6, cam, 64);
    auto hard = hard_rasterize(proj, sphere.faces(), 64);
    auto soft = soft_rasterize(proj, sphere.faces(), {1e-5, 64});
    for (std::size_t k = 0; k < hard.values().size(); ++k) {
      disagree += (soft.values()[k] > 0.5) != (hard.values()[k] > 0.5);
      ++total;
    }
  }
  CHECK(static_cast<double>(disagree) / total <= 0.01);
}

TEST_CASE("silhouette image validates its values") {
  CHECK_THROWS(SilhouetteImage(2, Tensor({2, 2}, {0, 0.5, 1.0, 1.5})));
  CHECK_THROWS(SilhouetteImage(2, Tensor({2, 3}, std::vector<double>(6, 0))));
  CHECK_NOTHROW(SilhouetteImage(2, Tensor({2, 2}, {0, 0.5, 1.0, 0.25})));
  CHECK_THROWS(soft_rasterize(pts({{0, 0}, {1, 0}, {0, 1}}), {{0, 1, 2}}, {0.0, 8}));
  CHECK_THROWS(soft_rasterize(pts({{0, 0}, {1, 0}, {0, NAN}}), {{0, 1, 2}}, {1.0, 8}));
  CHECK_THROWS(hard_rasterize(pts({{0, 0}, {1, 0}, {0, 1}}), {{0, 1, 3}}, 8));
  CHECK(SoftRasterSettings::defaults(64).sigma == doctest::Approx(0.4096));
}
