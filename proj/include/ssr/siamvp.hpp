#pragma once

// Siamese viewpoint matcher: a shared conv embedding and a logistic head on
// the absolute embedding difference, so P(a, b) = P(b, a) by construction.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ssr/nn.hpp"
#include "ssr/rasterizer.hpp"

namespace ssr::siam {

using ad::Tensor;
using raster::SilhouetteImage;

struct SiamConfig {
  int image_size = 64;
  std::size_t embed_dim = 128;
};

class SiameseNet {
 public:
  static SiameseNet init(std::uint64_t seed, SiamConfig cfg = {});
  SiameseNet with_params(nn::ParamSet p) const;

  const SiamConfig& config() const { return cfg_; }
  const nn::ParamSet& params() const { return params_; }
  nn::ParamSet& params() { return params_; }

  /// images (N,1,S,S) -> embeddings (N,D)
  Tensor embed(const nn::ParamSet& p, const Tensor& images) const;
  /// Row-wise P(same) for embeddings ea, eb (N,D) -> (N)
  Tensor head(const nn::ParamSet& p, const Tensor& ea, const Tensor& eb) const;

  /// Each image is embedded on its own, so the result does not depend on
  /// argument order or on batch composition.
  double match_probability(const SilhouetteImage& a, const SilhouetteImage& b) const;

  Tensor stack(const std::vector<SilhouetteImage>& images) const;
  /// Untracked embeddings of many images, in chunks.
  std::vector<std::vector<double>> embed_all(const std::vector<SilhouetteImage>& images) const;
  /// Untracked P(same) from two precomputed embeddings.
  double probability(std::span<const double> ea, std::span<const double> eb) const;

 private:
  SiamConfig cfg_;
  nn::ParamSet params_;
};

// ---- rotation augmentation ----------------------------------------------------

/// Rotation about the image center by angle_deg (counterclockwise as
/// displayed, rows growing downward), bilinear resampling, zero fill.
SilhouetteImage rotate_image(const SilhouetteImage& img, double angle_deg);

struct RotatedPair {
  SilhouetteImage a, b;
  double angle_deg;
};
/// Same uniformly drawn angle in [0, 360) for both images.
RotatedPair augment_rotation_pair(const SilhouetteImage& a, const SilhouetteImage& b, std::uint64_t seed);

// ---- pair mining ---------------------------------------------------------------

struct PoolView {
  SilhouetteImage image;
  std::string object_id;
  int class_index = 0;
  int viewpoint = 0;  // index into the viewpoint grid
};

struct PairSpec {
  std::size_t a = 0, b = 0;  // indices into the pool
  bool same = false;
};

struct MiningOptions {
  std::size_t oversample = 4;
  double hard_fraction = 0.5;
};

/// Current P(same) for candidate pairs.
using PairScorer = std::function<std::vector<double>(const std::vector<PairSpec>&)>;

/// Balanced batch: batch_size/2 positives (same viewpoint, different objects
/// of one class) and the rest negatives (different viewpoints, one class).
/// In each half, hard_fraction of the pairs are the hardest of
/// oversample x as many uniform candidates (highest P for negatives, lowest
/// for positives); ties keep sampling order.
std::vector<PairSpec> sample_pairs(const std::vector<PoolView>& pool, std::size_t batch_size,
                                   const PairScorer& scorer, std::mt19937_64& rng,
                                   const MiningOptions& opt = {});

// ---- viewpoint prediction ------------------------------------------------------

struct ViewPrediction {
  int viewpoint = 0;
  double confidence = 0.0;
};

/// Agreement rule on one row of S (plain) and S_hat (rotated): both argmaxes
/// (lowest index on ties) must coincide and both maxima exceed 0.5; the
/// confidence is the smaller maximum.
std::optional<ViewPrediction> select_viewpoint(std::span<const double> s_row, std::span<const double> s_hat_row);

/// refs[j] is the labeled reference image for viewpoint j.
std::optional<ViewPrediction> predict_viewpoint(const SiameseNet& net, const SilhouetteImage& img,
                                                const std::vector<SilhouetteImage>& refs,
                                                std::uint64_t seed);

/// Batched form: every query and every reference share one rotation angle.
std::vector<std::optional<ViewPrediction>> predict_viewpoints(const SiameseNet& net,
                                                              const std::vector<SilhouetteImage>& queries,
                                                              const std::vector<SilhouetteImage>& refs,
                                                              double angle_deg);

}  // namespace ssr::siam
