#include "ssr/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "ssr/evalmetrics.hpp"
#include "ssr/losses.hpp"
#include "ssr/rasterizer.hpp"
#include "ssr/rng.hpp"

namespace ssr::train {
namespace {

using ad::Tensor;

constexpr char kLogHeader[] = "epoch,iter,loss_recon,loss_siam,val_iou,label_ratio,pseudo_acc";

void require(bool ok, const std::string& what) {
  if (!ok) throw TrainError("config: " + what);
}

}  // namespace

void TrainConfig::validate() const {
  require(lr_recon > 0 && lr_siam > 0, "learning rates must be positive");
  require(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1, "betas must lie in (0, 1)");
  require(batch_recon > 0 && batch_siam >= 2, "batch sizes must be positive (batch_siam >= 2)");
  require(epochs > 0 && epochs <= 1000, "epochs must be in [1, 1000]");
  require(iters_per_epoch > 0 && cycle_period > 0, "iters_per_epoch and cycle_period must be positive");
  require(lambda_g >= 0 && sigma > 0, "lambda_g must be >= 0 and sigma > 0");
  require(confidence >= 0.5 && confidence < 1, "confidence must be in [0.5, 1)");
  require(mining_refresh > 0, "mining_refresh must be positive");
  require(hard_fraction >= 0 && hard_fraction <= 1, "hard_fraction must be in [0, 1]");
  require(eval_resolution > 0, "eval_resolution must be positive");
  require(views_per_sample >= 1, "views_per_sample must be at least 1");
}

TrainingViews TrainingViews::from_dataset(const data::Dataset& ds) {
  TrainingViews tv;
  const std::set<std::string> labeled(ds.splits.labeled.begin(), ds.splits.labeled.end());
  for (const auto& id : ds.splits.train) {
    const auto& obj = ds.object(id);
    const int cls = ds.class_index(obj.class_name);
    auto& dst = labeled.count(id) ? tv.labeled : tv.unlabeled;
    for (const auto& v : obj.views) dst.push_back({data::load_mask(ds.root / v.mask), id, cls, v.index});
  }
  return tv;
}

void adam_step(nn::ParamSet& params, std::vector<std::vector<double>> grads, nn::Adam& opt, double clip_norm,
               const std::string& prefix) {
  const auto& names = params.names();
  for (std::size_t k = 0; k < grads.size(); ++k)
    for (double g : grads[k])
      if (!std::isfinite(g)) throw TrainError("non-finite gradient in " + prefix + names[k]);
  if (clip_norm > 0) nn::clip_grad_norm(grads, clip_norm);
  opt.step(params, grads);
}

Trainer::Trainer(const data::Dataset& ds, TrainConfig cfg)
    : ds_(ds),
      cfg_(cfg),
      views_(TrainingViews::from_dataset(ds)),
      recon_(recon::Reconstructor::init(cfg.seed)),
      siam_(siam::SiameseNet::init(cfg.seed)),
      opt_recon_({cfg.lr_recon, cfg.beta1, cfg.beta2}),
      opt_siam_({cfg.lr_siam, cfg.beta1, cfg.beta2}),
      laplacian_(geometry::uniform_laplacian(recon_.template_mesh())),
      grid_(data::canonical_viewpoints()),
      batch_rng_(substream(cfg.seed, "trainer.batch")),
      pair_rng_(substream(cfg.seed, "trainer.pairs")),
      rotation_rng_(substream(cfg.seed, "trainer.rotation")) {
  cfg_.validate();
  if (views_.labeled.empty()) throw TrainError("trainer: the labeled pool is empty");
  if (ds.image_size != recon_.config().image_size)
    throw TrainError("trainer: dataset images are " + std::to_string(ds.image_size) + " px, model expects " +
                     std::to_string(recon_.config().image_size));

  for (std::size_t i = 0; i < views_.labeled.size(); ++i) labeled_by_object_[views_.labeled[i].object_id].push_back(i);
  for (std::size_t i = 0; i < views_.unlabeled.size(); ++i)
    unlabeled_by_object_[views_.unlabeled[i].object_id].push_back(i);
  for (const auto& v : views_.unlabeled) {
    labels_.add_unlabeled({v.object_id, v.viewpoint}, v.class_index);
    label_images_.push_back(v.image);
    label_truth_.push_back(v.viewpoint);
  }
  for (const auto& v : views_.labeled) {
    pair_pool_.push_back({v.image, v.object_id, v.class_index, v.viewpoint});
    if (references_.empty() || references_.back().object_id != v.object_id)
      references_.push_back({v.object_id, v.class_index, std::vector<SilhouetteImage>(grid_.size())});
    references_.back().views.at(v.viewpoint) = v.image;
  }
  if (cfg_.ssr) {
    std::map<int, int> per_class;
    bool pairable = false;
    for (const auto& r : references_) pairable |= ++per_class[r.class_index] >= 2;
    if (!pairable) throw TrainError("trainer: ssr mode needs a class with at least two labeled objects");
    probe_ = pseudo::make_probe(references_, cfg_.seed);
  }
}

void Trainer::recon_step(StepLosses& out) {
  // Half the batch from pseudo labels once there are any, the rest labeled.
  std::vector<std::size_t> pseudo_idx;
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i].status == pseudo::Status::pseudo) pseudo_idx.push_back(i);
  const std::size_t batch = cfg_.batch_recon;
  const std::size_t n_pseudo = pseudo_idx.empty() ? 0 : batch / 2;
  const std::size_t n_labeled = batch - n_pseudo;

  // Each sample is an input image plus the silhouettes it is compared
  // against: its own view first, then other views of the same object whose
  // viewpoint is known (labeled) or currently pseudo-labeled.
  struct Target {
    const SilhouetteImage* mask;
    int viewpoint;
  };
  std::vector<SilhouetteImage> inputs;
  std::vector<std::vector<Target>> targets;
  const std::size_t extra = cfg_.views_per_sample - 1;
  auto add_sample = [&](const SilhouetteImage& img, int vp, std::vector<Target> others) {
    std::vector<Target> t{{&img, vp}};
    for (std::size_t k = 0; k < extra && !others.empty(); ++k) {
      const auto j = std::uniform_int_distribution<std::size_t>(0, others.size() - 1)(batch_rng_);
      t.push_back(others[j]);
      others.erase(others.begin() + static_cast<std::ptrdiff_t>(j));
    }
    inputs.push_back(img);
    targets.push_back(std::move(t));
  };

  std::uniform_int_distribution<std::size_t> pick_l(0, views_.labeled.size() - 1);
  for (std::size_t k = 0; k < n_labeled; ++k) {
    const auto i = pick_l(batch_rng_);
    const auto& v = views_.labeled[i];
    std::vector<Target> others;
    if (extra)
      for (auto j : labeled_by_object_.at(v.object_id))
        if (j != i) others.push_back({&views_.labeled[j].image, views_.labeled[j].viewpoint});
    add_sample(v.image, v.viewpoint, std::move(others));
  }
  if (n_pseudo) {
    std::uniform_int_distribution<std::size_t> pick_p(0, pseudo_idx.size() - 1);
    for (std::size_t k = 0; k < n_pseudo; ++k) {
      const auto i = pseudo_idx[pick_p(batch_rng_)];
      std::vector<Target> others;
      if (extra)
        for (auto j : unlabeled_by_object_.at(labels_[i].key.object_id))
          if (j != i && labels_[j].status == pseudo::Status::pseudo)
            others.push_back({&label_images_[j], *labels_[j].viewpoint});
      add_sample(label_images_[i], *labels_[i].viewpoint, std::move(others));
    }
  }

  ad::Tape tape;
  const auto bound = recon_.params().bind(tape);
  const auto meshes = recon_.reconstruct_batch(bound, inputs);
  for (const auto& m : meshes)
    for (double x : m.vertices().values())
      if (!std::isfinite(x)) throw TrainError("non-finite predicted vertex at iteration " + std::to_string(iter_));
  const raster::SoftRasterSettings settings{cfg_.sigma, recon_.config().image_size};
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t k = 0; k < meshes.size(); ++k) {
    Tensor sample = Tensor::scalar(0.0);
    for (const auto& t : targets[k]) {
      const auto cam = geometry::viewpoint_to_camera(grid_[t.viewpoint]);
      const auto pred =
          raster::soft_rasterize(geometry::project(meshes[k], cam, settings.image_size), meshes[k].faces(), settings);
      sample = sample + losses::total_reconstruction_loss(pred, *t.mask, meshes[k], laplacian_, cfg_.lambda_g);
    }
    total = total + sample / static_cast<double>(targets[k].size());
  }
  const Tensor loss = total / static_cast<double>(meshes.size());
  if (!std::isfinite(loss.item()))
    throw TrainError("non-finite reconstruction loss at iteration " + std::to_string(iter_));
  adam_step(recon_.params(), nn::collect_grads(bound, tape.backward(loss)), opt_recon_, cfg_.clip_norm, "recon/");
  out.recon = loss.item();
  out.n_labeled = n_labeled;
  out.n_pseudo = n_pseudo;
}

void Trainer::refresh_mining_cache() {
  std::vector<SilhouetteImage> imgs;
  for (const auto& p : pair_pool_) imgs.push_back(p.image);
  mining_cache_ = siam_.embed_all(imgs);
  mining_cache_iter_ = iter_;
}

void Trainer::siam_step(StepLosses& out) {
  if (mining_cache_iter_ < 0 || iter_ - mining_cache_iter_ >= cfg_.mining_refresh) refresh_mining_cache();
  const siam::PairScorer scorer = [this](const std::vector<siam::PairSpec>& pairs) {
    std::vector<double> p;
    p.reserve(pairs.size());
    for (const auto& s : pairs) p.push_back(siam_.probability(mining_cache_[s.a], mining_cache_[s.b]));
    return p;
  };
  const auto pairs = siam::sample_pairs(pair_pool_, cfg_.batch_siam, scorer, pair_rng_, {4, cfg_.hard_fraction});

  std::vector<SilhouetteImage> a, b;
  std::vector<double> target;
  for (const auto& s : pairs) {
    a.push_back(pair_pool_[s.a].image);
    b.push_back(pair_pool_[s.b].image);
    target.push_back(s.same ? 1.0 : 0.0);
  }
  // Every pair gets a rotated duplicate with the same label. A shared
  // in-plane rotation keeps matching viewpoints matching and mismatched ones
  // mismatched; rotating positives alone teaches "resampled => same".
  if (cfg_.rotation_augment) {
    std::uniform_real_distribution<double> angle(0.0, 360.0);
    for (const auto& s : pairs) {
      const double th = angle(rotation_rng_);
      a.push_back(siam::rotate_image(pair_pool_[s.a].image, th));
      b.push_back(siam::rotate_image(pair_pool_[s.b].image, th));
      target.push_back(s.same ? 1.0 : 0.0);
    }
  }
  const std::size_t n = a.size();
  std::vector<SilhouetteImage> both(a);
  both.insert(both.end(), b.begin(), b.end());

  ad::Tape tape;
  const auto bound = siam_.params().bind(tape);
  const Tensor e = siam_.embed(bound, siam_.stack(both));
  const Tensor p = ad::clamp(siam_.head(bound, ad::slice(e, 0, 0, n), ad::slice(e, 0, n, 2 * n)),
                             losses::kProbClamp, 1.0 - losses::kProbClamp);
  const Tensor t({n}, target);
  const Tensor loss = -ad::mean(t * ad::log(p) + (1.0 - t) * ad::log(1.0 - p));
  if (!std::isfinite(loss.item())) throw TrainError("non-finite pair loss at iteration " + std::to_string(iter_));
  adam_step(siam_.params(), nn::collect_grads(bound, tape.backward(loss)), opt_siam_, cfg_.clip_norm, "siam/");
  out.siam = loss.item();
  out.n_pairs = n;
}

StepLosses Trainer::train_step() {
  StepLosses out;
  recon_step(out);
  if (cfg_.ssr) siam_step(out);
  ++iter_;
  return out;
}

pseudo::CycleReport Trainer::run_cycle() {
  if (!cfg_.ssr) throw TrainError("run_cycle: pseudo-labeling is disabled in reconstruction-only mode");
  ++cycles_run_;
  return pseudo::run_cycle(labels_, label_images_, label_truth_, references_, siam_, probe_, cycles_run_, cfg_.seed,
                           {cfg_.confidence, cfg_.gate});
}

double Trainer::validate() const {
  if (ds_.splits.val.empty()) return 0.0;
  return eval::test_iou(recon_, ds_, ds_.splits.val, cfg_.eval_resolution).mean;
}

nn::Checkpoint Trainer::checkpoint(const nlohmann::json& metadata) const {
  nn::Checkpoint ck;
  nn::merge_prefixed(ck.tensors, recon_.params(), "recon/");
  nn::merge_prefixed(ck.tensors, siam_.params(), "siam/");
  ck.metadata = metadata;
  ck.metadata["mode"] = cfg_.ssr ? "ssr" : "softras-only";
  ck.metadata["iteration"] = iter_;
  ck.metadata["seed"] = cfg_.seed;
  return ck;
}

FitResult Trainer::fit(const std::optional<fs::path>& out_dir) {
  FitResult res{recon_, siam_, 0, -1.0, {}, {}};
  if (out_dir) {
    fs::create_directories(*out_dir);
    write_log_header(*out_dir / "train_log.csv");
    fs::remove(*out_dir / "pseudo_log.jsonl");
  }
  for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
    double sum_recon = 0.0, sum_siam = 0.0;
    for (int k = 0; k < cfg_.iters_per_epoch; ++k) {
      const auto l = train_step();
      sum_recon += l.recon;
      sum_siam += l.siam;
      if (cfg_.ssr && iter_ % cfg_.cycle_period == 0) {
        res.cycles.push_back(run_cycle());
        if (out_dir) pseudo::append_cycle_log(res.cycles.back(), *out_dir / "pseudo_log.jsonl");
      }
    }
    EpochLog row;
    row.epoch = epoch;
    row.iter = iter_;
    row.loss_recon = sum_recon / cfg_.iters_per_epoch;
    row.loss_siam = sum_siam / cfg_.iters_per_epoch;
    row.val_iou = validate();
    row.label_ratio = pseudo::label_ratio(labels_);
    row.pseudo_acc = pseudo::pseudo_accuracy(labels_, label_truth_);
    res.log.push_back(row);
    if (out_dir) append_log_row(*out_dir / "train_log.csv", row);
    if (row.val_iou > res.best_val_iou) {
      res.best_val_iou = row.val_iou;
      res.best_epoch = epoch;
      res.best = recon_;
      res.best_siam = siam_;
      if (out_dir) nn::save_checkpoint(*out_dir / "best.ckpt", checkpoint({{"epoch", epoch}, {"val_iou", row.val_iou}}));
    }
  }
  if (out_dir) nn::save_checkpoint(*out_dir / "last.ckpt", checkpoint({{"epoch", cfg_.epochs}}));
  return res;
}

void write_log_header(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw TrainError("train log: cannot write " + path.string());
  out << kLogHeader << '\n';
}

void append_log_row(const fs::path& path, const EpochLog& r) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw TrainError("train log: cannot write " + path.string());
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%ld,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.epoch, r.iter, r.loss_recon, r.loss_siam,
                r.val_iou, r.label_ratio, r.pseudo_acc);
  out << buf;
}

std::vector<EpochLog> read_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw TrainError("train log: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kLogHeader) throw TrainError("train log: unexpected header in " + path.string());
  std::vector<EpochLog> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    EpochLog r;
    if (std::sscanf(line.c_str(), "%d,%ld,%lf,%lf,%lf,%lf,%lf", &r.epoch, &r.iter, &r.loss_recon, &r.loss_siam,
                    &r.val_iou, &r.label_ratio, &r.pseudo_acc) != 7)
      throw TrainError("train log: malformed row at line " + std::to_string(line_no) + " of " + path.string());
    rows.push_back(r);
  }
  return rows;
}

}  // namespace ssr::train
