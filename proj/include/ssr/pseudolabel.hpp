#pragma once

// Viewpoint labels for the training views: ground-truth labels, unlabeled
// views, and pseudo labels assigned by the Siamese matcher in periodic cycles.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ssr/siamvp.hpp"

namespace ssr::pseudo {

using raster::SilhouetteImage;

inline constexpr double kConfidenceThreshold = 0.8;
inline constexpr std::size_t kProbePairs = 64;

enum class Status { labeled, unlabeled, pseudo };
const char* status_name(Status s);

struct ViewKey {
  std::string object_id;
  int view = 0;  // slot in the object's view list
  auto operator<=>(const ViewKey&) const = default;
};

struct LabelEntry {
  ViewKey key;
  int class_index = 0;
  Status status = Status::unlabeled;
  std::optional<int> viewpoint;  // grid index
  std::optional<double> confidence;
  std::optional<int> cycle_assigned;
};

class LabelState {
 public:
  /// Returns the entry index. Keys must be unique.
  std::size_t add_labeled(ViewKey key, int class_index, int viewpoint);
  std::size_t add_unlabeled(ViewKey key, int class_index);

  /// unlabeled or pseudo -> pseudo. Throws for labeled entries or a
  /// confidence not above the threshold.
  void set_pseudo(std::size_t i, int viewpoint, double confidence, int cycle);

  const std::vector<LabelEntry>& entries() const { return entries_; }
  const LabelEntry& operator[](std::size_t i) const { return entries_[i]; }
  std::size_t size() const { return entries_.size(); }
  std::optional<std::size_t> find(const ViewKey& key) const;
  std::size_t count(Status s) const;

 private:
  std::size_t add(LabelEntry e);
  std::vector<LabelEntry> entries_;
};

/// |pseudo| / (|pseudo| + |unlabeled|), 0 for an empty pool.
double label_ratio(const LabelState& state);

/// Fraction of pseudo labels equal to truth[i] (aligned with entries; -1 =
/// unknown). 1 when there are no pseudo labels.
double pseudo_accuracy(const LabelState& state, const std::vector<int>& truth);

/// A labeled object with one image per grid viewpoint.
struct ReferenceSet {
  std::string object_id;
  int class_index = 0;
  std::vector<SilhouetteImage> views;
};

struct ProbePair {
  SilhouetteImage a, b;
  bool same = false;
};

/// Balanced pairs from the labeled pool: positives share a viewpoint
/// (different objects of a class when the class has two), negatives are one
/// class at different viewpoints.
std::vector<ProbePair> make_probe(const std::vector<ReferenceSet>& labeled, std::uint64_t seed,
                                  std::size_t n_pairs = kProbePairs);

/// Fraction of probe pairs classified correctly at threshold 0.5.
double probe_accuracy(const siam::SiameseNet& net, const std::vector<ProbePair>& probe);

struct CycleOptions {
  double threshold = kConfidenceThreshold;
  bool gate = true;  // require 100% probe accuracy
};

struct CycleReport {
  int cycle = 0;
  bool gate_passed = false;
  double probe_accuracy = 0.0;
  std::size_t assigned = 0;     // confident predictions written
  std::size_t skipped = 0;      // views without a confident prediction
  std::size_t overwritten = 0;  // assigned over a different earlier pseudo label
  double ratio = 0.0;
  std::optional<double> accuracy;
  double wall_ms = 0.0;
};

/// One sweep over every unlabeled or pseudo entry. images and truth are
/// aligned with state entries (truth may be empty when unknown). Each view is
/// matched against the reference set of a random labeled object of its class;
/// views sharing a reference set share one rotation angle.
CycleReport run_cycle(LabelState& state, const std::vector<SilhouetteImage>& images,
                      const std::vector<int>& truth, const std::vector<ReferenceSet>& labeled,
                      const siam::SiameseNet& net, const std::vector<ProbePair>& probe, int cycle,
                      std::uint64_t seed, const CycleOptions& opt = {});

/// Appends one JSON line.
void append_cycle_log(const CycleReport& report, const std::filesystem::path& path);

}  // namespace ssr::pseudo
