#include "ssr/reconstructor.hpp"

#include <stdexcept>

#include "ssr/rng.hpp"

namespace ssr::recon {
namespace {

constexpr std::size_t kKernel = 5;
constexpr std::size_t kChannels[] = {1, 16, 32, 64, 128};
constexpr ad::Conv2dOptions kConv{2, 2};

std::string conv_name(int i, const char* part) { return "enc" + std::to_string(i) + "." + part; }

}  // namespace

Reconstructor Reconstructor::init(std::uint64_t seed, ReconstructorConfig cfg) {
  if (cfg.image_size % 16 != 0 || cfg.image_size <= 0) {
    throw std::invalid_argument("reconstructor: image size must be a positive multiple of 16");
  }
  Reconstructor r;
  r.cfg_ = cfg;
  const Mesh ico = geometry::make_icosphere(cfg.template_level);
  r.template_ = ico.with_vertices(ico.vertices() * cfg.template_radius);
  r.template_flat_ = ad::reshape(r.template_.vertices(), {r.template_.vertices().size()});

  auto rng = substream(seed, "reconstructor.init");
  for (int i = 0; i < 4; ++i) {
    const std::size_t in = kChannels[i], out = kChannels[i + 1];
    r.params_.add(conv_name(i, "w"), nn::kaiming_normal({out, in, kKernel, kKernel}, in * kKernel * kKernel, rng));
    r.params_.add(conv_name(i, "b"), Tensor::zeros({out}));
  }
  const std::size_t side = cfg.image_size / 16;
  const std::size_t flat = kChannels[4] * side * side;
  const std::size_t nv3 = r.template_.num_vertices() * 3;
  r.params_.add("fc.w", nn::kaiming_normal({flat, cfg.latent}, flat, rng));
  r.params_.add("fc.b", Tensor::zeros({cfg.latent}));
  r.params_.add("dec0.w", nn::kaiming_normal({cfg.latent, cfg.hidden}, cfg.latent, rng));
  r.params_.add("dec0.b", Tensor::zeros({cfg.hidden}));
  r.params_.add("dec1.w", Tensor::zeros({cfg.hidden, nv3}));
  r.params_.add("dec1.b", Tensor::zeros({nv3}));
  return r;
}

Reconstructor Reconstructor::with_params(nn::ParamSet p) const {
  Reconstructor r = *this;
  for (const auto& name : params_.names()) r.params_.set(name, p.get(name).detach());
  return r;
}

Tensor Reconstructor::stack(const std::vector<SilhouetteImage>& images) const {
  const std::size_t s = cfg_.image_size;
  std::vector<double> v;
  v.reserve(images.size() * s * s);
  for (const auto& img : images) {
    if (img.size() != cfg_.image_size) {
      throw std::invalid_argument("reconstructor: expected " + std::to_string(s) + "x" + std::to_string(s) +
                                  " input, got " + std::to_string(img.size()));
    }
    v.insert(v.end(), img.values().values().begin(), img.values().values().end());
  }
  return Tensor({images.size(), 1, s, s}, std::move(v));
}

Tensor Reconstructor::forward(const nn::ParamSet& p, const Tensor& images) const {
  const std::size_t s = cfg_.image_size;
  if (images.rank() != 4 || images.dim(1) != 1 || images.dim(2) != s || images.dim(3) != s) {
    throw std::invalid_argument("reconstructor: expected (N,1," + std::to_string(s) + "," + std::to_string(s) +
                                ") input, got " + ad::shape_str(images.shape()));
  }
  const std::size_t n = images.dim(0);
  Tensor h = images;
  for (int i = 0; i < 4; ++i) h = ad::relu(ad::conv2d(h, p.get(conv_name(i, "w")), p.get(conv_name(i, "b")), kConv));
  h = ad::reshape(h, {n, h.size() / n});
  h = ad::relu(nn::linear(h, p.get("fc.w"), p.get("fc.b")));
  h = ad::relu(nn::linear(h, p.get("dec0.w"), p.get("dec0.b")));
  const Tensor disp = cfg_.displacement_bound * ad::tanh(nn::linear(h, p.get("dec1.w"), p.get("dec1.b")));
  return ad::reshape(disp + template_flat_, {n, template_.num_vertices(), 3});
}

std::vector<Mesh> Reconstructor::reconstruct_batch(const nn::ParamSet& p,
                                                   const std::vector<SilhouetteImage>& images) const {
  const Tensor verts = forward(p, stack(images));
  const std::size_t nv = template_.num_vertices();
  std::vector<Mesh> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    out.push_back(template_.with_vertices(ad::reshape(ad::slice(verts, 0, i, i + 1), {nv, 3})));
  }
  return out;
}

Mesh Reconstructor::reconstruct(const SilhouetteImage& image) const {
  return reconstruct_batch(params_, {image}).front();
}

}  // namespace ssr::recon
