#include "ssr/losses.hpp"

#include <stdexcept>

namespace ssr::losses {

Tensor silhouette_loss(const raster::SilhouetteImage& pred, const raster::SilhouetteImage& target) {
  if (pred.size() != target.size()) {
    throw std::invalid_argument("silhouette_loss: size mismatch " + std::to_string(pred.size()) +
                                " vs " + std::to_string(target.size()));
  }
  const Tensor& p = pred.values();
  const Tensor& t = target.values();
  const Tensor inter = p * t;
  const Tensor intersection = ad::sum(inter);
  const Tensor union_ = ad::sum(p + t - inter);
  return 1.0 - intersection / union_;
}

Tensor laplacian_loss(const geometry::Mesh& mesh, const geometry::SparseMatrix& laplacian) {
  if (laplacian.rows != mesh.num_vertices() || laplacian.cols != mesh.num_vertices()) {
    throw std::invalid_argument("laplacian_loss: operator does not match mesh vertex count");
  }
  if (mesh.num_vertices() == 0) return Tensor::scalar(0.0);
  const Tensor delta = geometry::sparse_matmul(laplacian, mesh.vertices());
  return ad::sum(delta * delta) / static_cast<double>(mesh.num_vertices());
}

Tensor pair_loss(const Tensor& p_same, bool same) {
  if (p_same.size() != 1) {
    throw std::invalid_argument("pair_loss: expected a scalar probability, got " +
                                ad::shape_str(p_same.shape()));
  }
  const Tensor p = ad::clamp(ad::reshape(p_same, {}), kProbClamp, 1.0 - kProbClamp);
  return same ? -ad::log(p) : -ad::log(1.0 - p);
}

Tensor total_reconstruction_loss(const raster::SilhouetteImage& pred,
                                 const raster::SilhouetteImage& target,
                                 const geometry::Mesh& mesh,
                                 const geometry::SparseMatrix& laplacian, double lambda_g) {
  const Tensor ls = silhouette_loss(pred, target);
  if (lambda_g == 0.0) return ls;
  return ls + lambda_g * laplacian_loss(mesh, laplacian);
}

}  // namespace ssr::losses
