#pragma once

// Image -> mesh model: a small strided conv encoder, an MLP decoder, and a
// bounded per-vertex displacement of a template icosphere.

#include <cstdint>
#include <vector>

#include "ssr/geometry.hpp"
#include "ssr/nn.hpp"
#include "ssr/rasterizer.hpp"

namespace ssr::recon {

using ad::Tensor;
using geometry::Mesh;
using raster::SilhouetteImage;

struct ReconstructorConfig {
  int image_size = 64;
  int template_level = 2;
  double template_radius = 0.5;
  double displacement_bound = 0.5;
  std::size_t latent = 256;
  std::size_t hidden = 512;
};

class Reconstructor {
 public:
  /// Kaiming-normal weights, zero biases, zero final decoder layer.
  static Reconstructor init(std::uint64_t seed, ReconstructorConfig cfg = {});
  /// Same architecture, parameters taken from p (shapes are checked).
  Reconstructor with_params(nn::ParamSet p) const;

  const ReconstructorConfig& config() const { return cfg_; }
  const Mesh& template_mesh() const { return template_; }
  const nn::ParamSet& params() const { return params_; }
  nn::ParamSet& params() { return params_; }

  /// images (N,1,S,S) -> vertices (N,V,3), using p (may be tape-bound).
  Tensor forward(const nn::ParamSet& p, const Tensor& images) const;
  /// Meshes for each image, sharing template faces.
  std::vector<Mesh> reconstruct_batch(const nn::ParamSet& p, const std::vector<SilhouetteImage>& images) const;
  Mesh reconstruct(const SilhouetteImage& image) const;

  /// Stacks images into (N,1,S,S); throws on a size mismatch.
  Tensor stack(const std::vector<SilhouetteImage>& images) const;

 private:
  ReconstructorConfig cfg_;
  Mesh template_;
  Tensor template_flat_;  // (V*3)
  nn::ParamSet params_;
};

}  // namespace ssr::recon
