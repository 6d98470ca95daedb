#pragma once

#include "ssr/geometry.hpp"
#include "ssr/rasterizer.hpp"
#include "ssr/tensor.hpp"

namespace ssr::losses {

using ad::Tensor;

inline constexpr double kDefaultLambdaG = 0.03;
inline constexpr double kProbClamp = 1e-12;

/// 1 - |pred * target|_1 / |pred + target - pred * target|_1 (soft IoU loss).
Tensor silhouette_loss(const raster::SilhouetteImage& pred, const raster::SilhouetteImage& target);

/// Mean over vertices of the squared norm of (L * vertices)_i.
Tensor laplacian_loss(const geometry::Mesh& mesh, const geometry::SparseMatrix& laplacian);

/// Binary cross-entropy on a match probability; p is clamped away from 0 and 1.
Tensor pair_loss(const Tensor& p_same, bool same);

Tensor total_reconstruction_loss(const raster::SilhouetteImage& pred,
                                 const raster::SilhouetteImage& target,
                                 const geometry::Mesh& mesh,
                                 const geometry::SparseMatrix& laplacian, double lambda_g);

}  // namespace ssr::losses
