#include "ssr/siamvp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "ssr/rng.hpp"

namespace ssr::siam {
namespace {

constexpr std::size_t kKernel = 5;
constexpr std::size_t kChannels[] = {1, 32, 64, 128};
constexpr ad::Conv2dOptions kConv{2, 0};
constexpr std::size_t kEmbedChunk = 32;

std::size_t conv_out(std::size_t in) { return (in - kKernel) / 2 + 1; }

std::string conv_name(int i, const char* part) { return "conv" + std::to_string(i) + "." + part; }

}  // namespace

SiameseNet SiameseNet::init(std::uint64_t seed, SiamConfig cfg) {
  std::size_t side = cfg.image_size;
  for (int i = 0; i < 3; ++i) {
    if (side < kKernel) throw std::invalid_argument("siamese: image size too small");
    side = conv_out(side);
  }
  SiameseNet net;
  net.cfg_ = cfg;
  auto rng = substream(seed, "siamese.init");
  for (int i = 0; i < 3; ++i) {
    const std::size_t in = kChannels[i], out = kChannels[i + 1];
    net.params_.add(conv_name(i, "w"), nn::kaiming_normal({out, in, kKernel, kKernel}, in * kKernel * kKernel, rng));
    net.params_.add(conv_name(i, "b"), Tensor::zeros({out}));
  }
  const std::size_t flat = kChannels[3] * side * side;
  net.params_.add("embed.w", nn::kaiming_normal({flat, cfg.embed_dim}, flat, rng));
  net.params_.add("embed.b", Tensor::zeros({cfg.embed_dim}));
  net.params_.add("head.w", nn::kaiming_normal({cfg.embed_dim, 1}, cfg.embed_dim, rng));
  net.params_.add("head.b", Tensor::zeros({1}));
  return net;
}

SiameseNet SiameseNet::with_params(nn::ParamSet p) const {
  SiameseNet n = *this;
  for (const auto& name : params_.names()) n.params_.set(name, p.get(name).detach());
  return n;
}

Tensor SiameseNet::stack(const std::vector<SilhouetteImage>& images) const {
  const std::size_t s = cfg_.image_size;
  std::vector<double> v;
  v.reserve(images.size() * s * s);
  for (const auto& img : images) {
    if (img.size() != cfg_.image_size) {
      throw std::invalid_argument("siamese: expected " + std::to_string(s) + "x" + std::to_string(s) +
                                  " input, got " + std::to_string(img.size()));
    }
    v.insert(v.end(), img.values().values().begin(), img.values().values().end());
  }
  return Tensor({images.size(), 1, s, s}, std::move(v));
}

Tensor SiameseNet::embed(const nn::ParamSet& p, const Tensor& images) const {
  const std::size_t s = cfg_.image_size;
  if (images.rank() != 4 || images.dim(1) != 1 || images.dim(2) != s || images.dim(3) != s) {
    throw std::invalid_argument("siamese: expected (N,1," + std::to_string(s) + "," + std::to_string(s) +
                                ") input, got " + ad::shape_str(images.shape()));
  }
  const std::size_t n = images.dim(0);
  Tensor h = images;
  for (int i = 0; i < 3; ++i) h = ad::relu(ad::conv2d(h, p.get(conv_name(i, "w")), p.get(conv_name(i, "b")), kConv));
  h = ad::reshape(h, {n, h.size() / n});
  return nn::linear(h, p.get("embed.w"), p.get("embed.b"));
}

Tensor SiameseNet::head(const nn::ParamSet& p, const Tensor& ea, const Tensor& eb) const {
  const Tensor logits = nn::linear(ad::abs(ea - eb), p.get("head.w"), p.get("head.b"));
  return ad::sigmoid(ad::reshape(logits, {logits.dim(0)}));
}

std::vector<std::vector<double>> SiameseNet::embed_all(const std::vector<SilhouetteImage>& images) const {
  std::vector<std::vector<double>> out;
  out.reserve(images.size());
  const std::size_t d = cfg_.embed_dim;
  for (std::size_t start = 0; start < images.size(); start += kEmbedChunk) {
    const std::size_t end = std::min(images.size(), start + kEmbedChunk);
    const std::vector<SilhouetteImage> chunk(images.begin() + start, images.begin() + end);
    const Tensor e = embed(params_, stack(chunk));
    for (std::size_t i = 0; i < chunk.size(); ++i) out.emplace_back(e.vec().begin() + i * d, e.vec().begin() + (i + 1) * d);
  }
  return out;
}

double SiameseNet::probability(std::span<const double> ea, std::span<const double> eb) const {
  const auto& w = params_.get("head.w").vec();
  double logit = params_.get("head.b")[0];
  for (std::size_t k = 0; k < w.size(); ++k) logit += w[k] * std::abs(ea[k] - eb[k]);
  return 1.0 / (1.0 + std::exp(-logit));
}

double SiameseNet::match_probability(const SilhouetteImage& a, const SilhouetteImage& b) const {
  if (a.size() != b.size()) throw std::invalid_argument("siamese: image size mismatch");
  const auto ea = embed_all({a}), eb = embed_all({b});
  return probability(ea[0], eb[0]);
}

SilhouetteImage rotate_image(const SilhouetteImage& img, double angle_deg) {
  const int n = img.size();
  const double c = 0.5 * (n - 1);
  const double th = angle_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(th), sn = std::sin(th);
  const auto& src = img.values().vec();
  auto at = [&](int r, int col) { return (r < 0 || r >= n || col < 0 || col >= n) ? 0.0 : src[r * n + col]; };
  std::vector<double> out(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double dx = j - c, dy = i - c;
      const double sr = c + sn * dx + cs * dy;
      const double sc = c + cs * dx - sn * dy;
      const int r0 = static_cast<int>(std::floor(sr)), c0 = static_cast<int>(std::floor(sc));
      const double fr = sr - r0, fc = sc - c0;
      const double v = (1 - fr) * ((1 - fc) * at(r0, c0) + fc * at(r0, c0 + 1)) +
                       fr * ((1 - fc) * at(r0 + 1, c0) + fc * at(r0 + 1, c0 + 1));
      out[static_cast<std::size_t>(i) * n + j] = std::clamp(v, 0.0, 1.0);
    }
  return SilhouetteImage(n, Tensor({std::size_t(n), std::size_t(n)}, std::move(out)));
}

RotatedPair augment_rotation_pair(const SilhouetteImage& a, const SilhouetteImage& b, std::uint64_t seed) {
  auto rng = substream(seed, "siamese.rotation");
  const double angle = std::uniform_real_distribution<double>(0.0, 360.0)(rng);
  return {rotate_image(a, angle), rotate_image(b, angle), angle};
}

std::vector<PairSpec> sample_pairs(const std::vector<PoolView>& pool, std::size_t batch_size,
                                   const PairScorer& scorer, std::mt19937_64& rng, const MiningOptions& opt) {
  // class -> viewpoint -> pool indices; class -> all indices
  std::map<int, std::map<int, std::vector<std::size_t>>> by_view;
  std::map<int, std::vector<std::size_t>> by_class;
  std::map<std::string, int> objects;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    by_view[pool[i].class_index][pool[i].viewpoint].push_back(i);
    by_class[pool[i].class_index].push_back(i);
    objects[pool[i].object_id] = 1;
  }
  if (objects.size() < 2) {
    throw std::invalid_argument("sample_pairs: need at least 2 labeled objects, got " + std::to_string(objects.size()));
  }
  // (class, viewpoint) cells holding two or more objects can supply positives.
  std::vector<const std::vector<std::size_t>*> pos_cells;
  for (const auto& [cls, views] : by_view)
    for (const auto& [vp, idx] : views) {
      std::map<std::string, int> objs;
      for (auto i : idx) objs[pool[i].object_id] = 1;
      if (objs.size() >= 2) pos_cells.push_back(&idx);
    }
  std::vector<const std::vector<std::size_t>*> neg_classes;
  for (const auto& [cls, idx] : by_class)
    if (by_view[cls].size() >= 2) neg_classes.push_back(&idx);
  if (pos_cells.empty()) throw std::invalid_argument("sample_pairs: no class has two objects at a shared viewpoint");
  if (neg_classes.empty()) throw std::invalid_argument("sample_pairs: no class has two distinct viewpoints");

  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  auto draw_positive = [&] {
    const auto& cell = *pos_cells[pick(pos_cells.size())];
    const std::size_t a = cell[pick(cell.size())];
    std::size_t b;
    do b = cell[pick(cell.size())];
    while (pool[b].object_id == pool[a].object_id);
    return PairSpec{a, b, true};
  };
  auto draw_negative = [&] {
    const auto& idx = *neg_classes[pick(neg_classes.size())];
    const std::size_t a = idx[pick(idx.size())];
    std::size_t b;
    do b = idx[pick(idx.size())];
    while (pool[b].viewpoint == pool[a].viewpoint);
    return PairSpec{a, b, false};
  };

  auto fill = [&](std::size_t n, bool positive, std::vector<PairSpec>& out) {
    const auto n_hard = static_cast<std::size_t>(std::floor(n * opt.hard_fraction));
    for (std::size_t i = 0; i < n - n_hard; ++i) out.push_back(positive ? draw_positive() : draw_negative());
    if (n_hard == 0) return;
    std::vector<PairSpec> cand;
    for (std::size_t i = 0; i < n_hard * std::max<std::size_t>(opt.oversample, 1); ++i)
      cand.push_back(positive ? draw_positive() : draw_negative());
    std::vector<double> score = scorer ? scorer(cand) : std::vector<double>(cand.size(), 0.5);
    if (score.size() != cand.size()) throw std::logic_error("sample_pairs: scorer returned wrong count");
    std::vector<std::size_t> order(cand.size());
    std::iota(order.begin(), order.end(), 0);
    // hard positives: lowest P; hard negatives: highest P
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      return positive ? score[x] < score[y] : score[x] > score[y];
    });
    for (std::size_t i = 0; i < n_hard; ++i) out.push_back(cand[order[i]]);
  };

  std::vector<PairSpec> batch;
  batch.reserve(batch_size);
  fill(batch_size / 2, true, batch);
  fill(batch_size - batch_size / 2, false, batch);
  return batch;
}

std::optional<ViewPrediction> select_viewpoint(std::span<const double> s_row, std::span<const double> s_hat_row) {
  if (s_row.empty() || s_row.size() != s_hat_row.size()) {
    throw std::invalid_argument("select_viewpoint: rows must be nonempty and equally long");
  }
  const auto v = static_cast<int>(std::max_element(s_row.begin(), s_row.end()) - s_row.begin());
  const auto vh = static_cast<int>(std::max_element(s_hat_row.begin(), s_hat_row.end()) - s_hat_row.begin());
  if (v != vh || !(s_row[v] > 0.5) || !(s_hat_row[vh] > 0.5)) return std::nullopt;
  return ViewPrediction{v, std::min(s_row[v], s_hat_row[vh])};
}

std::vector<std::optional<ViewPrediction>> predict_viewpoints(const SiameseNet& net,
                                                              const std::vector<SilhouetteImage>& queries,
                                                              const std::vector<SilhouetteImage>& refs,
                                                              double angle_deg) {
  if (refs.empty()) throw std::invalid_argument("predict_viewpoint: empty reference set");
  std::vector<SilhouetteImage> rq, rr;
  for (const auto& q : queries) rq.push_back(rotate_image(q, angle_deg));
  for (const auto& r : refs) rr.push_back(rotate_image(r, angle_deg));
  const auto eq = net.embed_all(queries), er = net.embed_all(refs);
  const auto eqr = net.embed_all(rq), err = net.embed_all(rr);

  std::vector<std::optional<ViewPrediction>> out;
  out.reserve(queries.size());
  std::vector<double> s(refs.size()), sh(refs.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    for (std::size_t j = 0; j < refs.size(); ++j) {
      s[j] = net.probability(eq[i], er[j]);
      sh[j] = net.probability(eqr[i], err[j]);
    }
    out.push_back(select_viewpoint(s, sh));
  }
  return out;
}

std::optional<ViewPrediction> predict_viewpoint(const SiameseNet& net, const SilhouetteImage& img,
                                                const std::vector<SilhouetteImage>& refs, std::uint64_t seed) {
  auto rng = substream(seed, "siamese.predict");
  const double angle = std::uniform_real_distribution<double>(0.0, 360.0)(rng);
  return predict_viewpoints(net, {img}, refs, angle).front();
}

}  // namespace ssr::siam
