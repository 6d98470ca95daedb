#pragma once

// Named parameter sets, initializers, layers and the optimizer shared by the
// reconstructor and the Siamese matcher.

#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssr/tensor.hpp"

namespace ssr::nn {

using ad::Shape;
using ad::Tensor;

/// Ordered collection of named tensors. Copies share storage (tensors are
/// immutable), so a copy is cheap.
class ParamSet {
 public:
  void add(const std::string& name, Tensor value);
  const Tensor& get(const std::string& name) const;
  void set(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::string>& names() const { return names_; }
  std::size_t num_tensors() const { return names_.size(); }
  std::size_t num_scalars() const;

  /// Copy whose tensors are fresh leaves on tape.
  ParamSet bind(ad::Tape& tape) const;
  /// Copy with every tensor detached from its tape.
  ParamSet detached() const;

  bool all_finite() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::map<std::string, std::size_t> index_;
};

/// Kaiming-normal weight: N(0, 2 / fan_in).
Tensor kaiming_normal(Shape shape, std::size_t fan_in, std::mt19937_64& rng);

/// x (N,in), w (in,out), b (out)
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// Per-tensor gradients of the bound parameters, in name order.
std::vector<std::vector<double>> collect_grads(const ParamSet& bound, const ad::Gradients& g);

/// Rescales grads so their global L2 norm is at most max_norm; returns the
/// norm before clipping.
double clip_grad_norm(std::vector<std::vector<double>>& grads, double max_norm);

class Adam {
 public:
  struct Options {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };
  Adam() = default;
  explicit Adam(Options opt) : opt_(opt) {}

  void step(ParamSet& params, const std::vector<std::vector<double>>& grads);
  void set_lr(double lr) { opt_.lr = lr; }
  const Options& options() const { return opt_; }
  long steps() const { return t_; }

  /// Moment buffers and step count, for resuming.
  void save_state(ParamSet& out, const std::string& prefix) const;
  void load_state(const ParamSet& in, const std::string& prefix, const ParamSet& params);

 private:
  Options opt_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// ---- checkpoint container ----------------------------------------------------
//
// Layout: 8-byte magic "SSRCKPT1", little-endian u64 header length, JSON header
// {"tensors": {name: {"shape": [...], "offset": bytes}}, "metadata": {...}},
// then the raw float64 blob.

inline constexpr char kCheckpointMagic[] = "SSRCKPT1";

struct Checkpoint {
  ParamSet tensors;
  nlohmann::json metadata = nlohmann::json::object();
};

/// Writes to a temporary file then renames, so readers never see a torn file.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies every tensor of src into dst under prefix + name.
void merge_prefixed(ParamSet& dst, const ParamSet& src, const std::string& prefix);
/// Replaces each tensor of target with src[prefix + name]; shapes must match.
void load_prefixed(ParamSet& target, const ParamSet& src, const std::string& prefix);

}  // namespace ssr::nn
