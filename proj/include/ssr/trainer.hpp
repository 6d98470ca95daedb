#pragma once

// Joint training loop: reconstruction steps on labeled and pseudo-labeled
// views, Siamese matcher steps on mined labeled pairs, and periodic
// pseudo-labeling cycles, with per-epoch validation IoU.

#include <cstdint>
#include <map>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssr/dataset.hpp"
#include "ssr/nn.hpp"
#include "ssr/pseudolabel.hpp"
#include "ssr/reconstructor.hpp"
#include "ssr/siamvp.hpp"

namespace ssr::train {

namespace fs = std::filesystem;
using raster::SilhouetteImage;

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  bool ssr = true;               // false: reconstruction only, no matcher, no pseudo labels
  bool rotation_augment = true;  // rotated duplicate of every matcher pair
  double lr_recon = 1e-4;
  double lr_siam = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int batch_recon = 64;
  int batch_siam = 32;
  int epochs = 60;
  int iters_per_epoch = 200;
  int cycle_period = 400;
  double lambda_g = 100.0;  // the Laplacian term is a per-vertex mean
  double sigma = 0.4096;  // 1e-4 * 64^2
  std::uint64_t seed = 0;
  double clip_norm = 10.0;  // <= 0 disables clipping
  double confidence = pseudo::kConfidenceThreshold;
  bool gate = true;
  int mining_refresh = 20;  // steps between refreshes of the mining embeddings
  double hard_fraction = 0.5;
  int eval_resolution = 32;
  int views_per_sample = 2;  // silhouettes compared per input: its own view plus others of the same object

  /// Throws TrainError naming the first invalid field.
  void validate() const;
};

struct StepLosses {
  double recon = 0.0;
  double siam = 0.0;
  std::size_t n_labeled = 0;
  std::size_t n_pseudo = 0;
  std::size_t n_pairs = 0;
};

struct EpochLog {
  int epoch = 0;
  long iter = 0;
  double loss_recon = 0.0;
  double loss_siam = 0.0;
  double val_iou = 0.0;
  double label_ratio = 0.0;
  double pseudo_acc = 1.0;
};

struct FitResult {
  recon::Reconstructor best;
  siam::SiameseNet best_siam;
  int best_epoch = 0;
  double best_val_iou = -1.0;
  std::vector<EpochLog> log;
  std::vector<pseudo::CycleReport> cycles;
};

/// Masks and labels of one dataset held in memory.
struct TrainingViews {
  struct View {
    SilhouetteImage image;
    std::string object_id;
    int class_index = 0;
    int viewpoint = 0;  // ground truth grid index
  };
  std::vector<View> labeled;
  std::vector<View> unlabeled;  // views of train objects outside the labeled set

  static TrainingViews from_dataset(const data::Dataset& ds);
};

class Trainer {
 public:
  /// Parameters are initialized from config.seed.
  Trainer(const data::Dataset& ds, TrainConfig cfg);

  /// One reconstruction step and, in ssr mode, one matcher step.
  StepLosses train_step();
  /// Pseudo-labeling sweep over the unlabeled views.
  pseudo::CycleReport run_cycle();
  /// Mean validation IoU of the current reconstructor.
  double validate() const;

  /// Full loop. If out_dir is given, writes train_log.csv, pseudo_log.jsonl,
  /// best.ckpt and last.ckpt there.
  FitResult fit(const std::optional<fs::path>& out_dir = std::nullopt);

  const TrainConfig& config() const { return cfg_; }
  const recon::Reconstructor& reconstructor() const { return recon_; }
  recon::Reconstructor& reconstructor() { return recon_; }
  const siam::SiameseNet& matcher() const { return siam_; }
  const pseudo::LabelState& labels() const { return labels_; }
  /// Entries are aligned with TrainingViews::unlabeled.
  pseudo::LabelState& labels() { return labels_; }
  long iteration() const { return iter_; }
  nn::Checkpoint checkpoint(const nlohmann::json& metadata = nlohmann::json::object()) const;

 private:
  void recon_step(StepLosses& out);
  void siam_step(StepLosses& out);
  void refresh_mining_cache();

  const data::Dataset& ds_;
  TrainConfig cfg_;
  TrainingViews views_;
  recon::Reconstructor recon_;
  siam::SiameseNet siam_;
  nn::Adam opt_recon_, opt_siam_;
  geometry::SparseMatrix laplacian_;
  std::vector<geometry::Viewpoint> grid_;

  // pseudo-labeling state; entries are aligned with views_.unlabeled
  pseudo::LabelState labels_;
  std::vector<SilhouetteImage> label_images_;
  std::vector<int> label_truth_;
  std::vector<pseudo::ReferenceSet> references_;
  std::vector<pseudo::ProbePair> probe_;
  int cycles_run_ = 0;

  // views grouped by object, for the extra supervising views of a sample
  std::map<std::string, std::vector<std::size_t>> labeled_by_object_;
  std::map<std::string, std::vector<std::size_t>> unlabeled_by_object_;

  std::vector<siam::PoolView> pair_pool_;
  std::vector<std::vector<double>> mining_cache_;
  long mining_cache_iter_ = -1;

  std::mt19937_64 batch_rng_, pair_rng_, rotation_rng_;
  long iter_ = 0;
};

/// Standard Adam update with optional clipping. Aborts with the parameter's
/// name on a non-finite gradient, before any parameter changes.
void adam_step(nn::ParamSet& params, std::vector<std::vector<double>> grads, nn::Adam& opt, double clip_norm,
               const std::string& prefix = "");

void write_log_header(const fs::path& path);
void append_log_row(const fs::path& path, const EpochLog& row);
std::vector<EpochLog> read_log(const fs::path& path);

}  // namespace ssr::train
