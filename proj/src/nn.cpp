#include "ssr/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ssr::nn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written in host order and assume little-endian");

void ParamSet::add(const std::string& name, Tensor value) {
  if (index_.count(name)) throw std::invalid_argument("params: duplicate tensor '" + name + "'");
  index_[name] = names_.size();
  names_.push_back(name);
  values_.push_back(std::move(value));
}

const Tensor& ParamSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("params: no tensor named '" + name + "'");
  return values_[it->second];
}

void ParamSet::set(const std::string& name, Tensor value) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("params: no tensor named '" + name + "'");
  if (value.shape() != values_[it->second].shape()) {
    throw std::invalid_argument("params: '" + name + "' expects " +
                                ad::shape_str(values_[it->second].shape()) + ", got " +
                                ad::shape_str(value.shape()));
  }
  values_[it->second] = std::move(value);
}

std::size_t ParamSet::num_scalars() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

ParamSet ParamSet::bind(ad::Tape& tape) const {
  ParamSet out = *this;
  for (auto& v : out.values_) v = tape.variable(v);
  return out;
}

ParamSet ParamSet::detached() const {
  ParamSet out = *this;
  for (auto& v : out.values_) v = v.detach();
  return out;
}

bool ParamSet::all_finite() const {
  for (const auto& t : values_)
    for (double x : t.values())
      if (!std::isfinite(x)) return false;
  return true;
}

Tensor kaiming_normal(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<double> v(ad::numel(shape));
  for (auto& x : v) x = n(rng);
  return Tensor(std::move(shape), std::move(v));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return ad::matmul(x, w) + b; }

std::vector<std::vector<double>> collect_grads(const ParamSet& bound, const ad::Gradients& g) {
  std::vector<std::vector<double>> out;
  out.reserve(bound.num_tensors());
  for (const auto& name : bound.names()) out.push_back(g.of(bound.get(name)).vec());
  return out;
}

double clip_grad_norm(std::vector<std::vector<double>>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double x : g) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& g : grads)
      for (double& x : g) x *= s;
  }
  return norm;
}

void Adam::step(ParamSet& params, const std::vector<std::vector<double>>& grads) {
  const auto& names = params.names();
  if (grads.size() != names.size()) throw std::invalid_argument("adam: gradient count mismatch");
  if (m_.empty()) {
    for (const auto& n : names) {
      m_.emplace_back(params.get(n).size(), 0.0);
      v_.emplace_back(params.get(n).size(), 0.0);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < names.size(); ++k) {
    const Tensor& p = params.get(names[k]);
    if (grads[k].size() != p.size()) throw std::invalid_argument("adam: gradient size mismatch for " + names[k]);
    std::vector<double> next = p.vec();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < next.size(); ++i) {
      const double g = grads[k][i];
      m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * g;
      v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * g * g;
      next[i] -= opt_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt_.eps);
    }
    params.set(names[k], Tensor(p.shape(), std::move(next)));
  }
}

void Adam::save_state(ParamSet& out, const std::string& prefix) const {
  out.add(prefix + "step", Tensor::scalar(static_cast<double>(t_)));
  for (std::size_t k = 0; k < m_.size(); ++k) {
    out.add(prefix + "m/" + std::to_string(k), Tensor({m_[k].size()}, m_[k]));
    out.add(prefix + "v/" + std::to_string(k), Tensor({v_[k].size()}, v_[k]));
  }
}

void Adam::load_state(const ParamSet& in, const std::string& prefix, const ParamSet& params) {
  t_ = static_cast<long>(in.get(prefix + "step").item());
  m_.clear();
  v_.clear();
  if (t_ == 0) return;
  for (std::size_t k = 0; k < params.num_tensors(); ++k) {
    const Tensor& m = in.get(prefix + "m/" + std::to_string(k));
    const Tensor& v = in.get(prefix + "v/" + std::to_string(k));
    if (m.size() != params.get(params.names()[k]).size() || v.size() != m.size()) {
      throw std::invalid_argument("adam: optimizer state does not match parameters");
    }
    m_.push_back(m.vec());
    v_.push_back(v.vec());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["tensors"] = nlohmann::json::object();
  header["order"] = ckpt.tensors.names();
  std::uint64_t offset = 0;
  for (const auto& name : ckpt.tensors.names()) {
    const Tensor& t = ckpt.tensors.get(name);
    header["tensors"][name] = {{"shape", t.shape()}, {"offset", offset}};
    offset += t.size() * sizeof(double);
  }
  header["metadata"] = ckpt.metadata;
  const std::string text = header.dump();

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + tmp.string());
    out.write(kCheckpointMagic, 8);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& name : ckpt.tensors.names()) {
      const auto& v = ckpt.tensors.get(name).vec();
      out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    }
    out.flush();
    if (!out) throw std::runtime_error("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw std::runtime_error("checkpoint: " + path.string() + " is not an SSRCKPT1 file");
  }
  std::uint64_t len = 0;
  if (!in.read(reinterpret_cast<char*>(&len), sizeof len) || len > (1ull << 32)) {
    throw std::runtime_error("checkpoint: corrupt header length in " + path.string());
  }
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) {
    throw std::runtime_error("checkpoint: truncated header in " + path.string());
  }
  const auto header = nlohmann::json::parse(text);
  const auto blob_start = in.tellg();

  Checkpoint ckpt;
  ckpt.metadata = header.value("metadata", nlohmann::json::object());
  for (const auto& name : header.at("order")) {
    const auto& entry = header.at("tensors").at(name.get<std::string>());
    Shape shape = entry.at("shape").get<Shape>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    std::vector<double> v(ad::numel(shape));
    in.seekg(blob_start + static_cast<std::streamoff>(offset));
    if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)))) {
      throw std::runtime_error("checkpoint: truncated data for '" + name.get<std::string>() + "'");
    }
    ckpt.tensors.add(name.get<std::string>(), Tensor(std::move(shape), std::move(v)));
  }
  return ckpt;
}

void merge_prefixed(ParamSet& dst, const ParamSet& src, const std::string& prefix) {
  for (const auto& name : src.names()) dst.add(prefix + name, src.get(name));
}

void load_prefixed(ParamSet& target, const ParamSet& src, const std::string& prefix) {
  for (const auto& name : target.names()) target.set(name, src.get(prefix + name).detach());
}

}  // namespace ssr::nn
