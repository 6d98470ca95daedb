#pragma once

// Differentiable soft silhouette rasterization.
//
// Each face j contributes D_j(p) = sigmoid(sign * d^2 / sigma) to pixel p,
// where d is the pixel-space distance from p's center to the face's screen
// triangle boundary and sign is +1 strictly inside, -1 otherwise. Faces are
// combined as I(p) = 1 - prod_j (1 - D_j(p)). No depth test: silhouettes only.

#include <vector>

#include "ssr/geometry.hpp"
#include "ssr/tensor.hpp"

namespace ssr::raster {

using ad::Tensor;
using geometry::Face;

/// Square occupancy image with values in [0, 1].
class SilhouetteImage {
 public:
  SilhouetteImage() = default;
  /// values must be (size, size); throws if any value leaves [0, 1].
  SilhouetteImage(int size, Tensor values);
  static SilhouetteImage zeros(int size);

  int size() const { return size_; }
  const Tensor& values() const { return values_; }
  double at(int row, int col) const { return values_[static_cast<std::size_t>(row) * size_ + col]; }

 private:
  int size_ = 0;
  Tensor values_;
};

struct SoftRasterSettings {
  double sigma = 0.0;  // pixel^2
  int image_size = 0;

  /// sigma = 1e-4 * image_size^2
  static SoftRasterSettings defaults(int image_size);
};

/// projected: (V,3) of (x_pixel, y_pixel, depth); only x and y are used.
SilhouetteImage soft_rasterize(const Tensor& projected, const std::vector<Face>& faces,
                               const SoftRasterSettings& settings);

/// Pixel is 1 iff its center lies inside (or on) some non-degenerate triangle.
SilhouetteImage hard_rasterize(const Tensor& projected, const std::vector<Face>& faces,
                               int image_size);

}  // namespace ssr::raster
