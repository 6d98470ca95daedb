#include "ssr/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

namespace ssr::config {
namespace {

struct Key {
  const char* name;
  const char* help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("config: bad value '" + v + "' for " + key);
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: bad boolean '" + v + "' for " + key);
}

template <class T>
std::string fmt(T v) {
  if constexpr (std::is_integral_v<T>) {
    return std::to_string(v);
  } else {
    std::ostringstream s;
    s << std::setprecision(12) << v;
    return s.str();
  }
}

#define NUM(field, type, help)                                                                        \
  Key {                                                                                               \
    #field, help, [](RunConfig& c, const std::string& v) { c.train.field = parse_number<type>(#field, v); }, \
        [](const RunConfig& c) { return fmt(c.train.field); }                   \
  }
#define FLAG(field, help)                                                                          \
  Key {                                                                                            \
    #field, help, [](RunConfig& c, const std::string& v) { c.train.field = parse_bool(#field, v); }, \
        [](const RunConfig& c) { return std::string(c.train.field ? "true" : "false"); }          \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> k = {
      Key{"manifest", "dataset manifest.json", [](RunConfig& c, const std::string& v) { c.manifest = v; },
          [](const RunConfig& c) { return c.manifest; }},
      Key{"out", "output directory", [](RunConfig& c, const std::string& v) { c.out = v; },
          [](const RunConfig& c) { return c.out; }},
      Key{"n_labeled", "labeled objects per class",
          [](RunConfig& c, const std::string& v) { c.n_labeled = parse_number<int>("n_labeled", v); },
          [](const RunConfig& c) { return std::to_string(c.n_labeled); }},
      Key{"mode", "ssr or softras-only",
          [](RunConfig& c, const std::string& v) {
            if (v != "ssr" && v != "softras-only") throw ConfigError("config: mode must be ssr or softras-only, got '" + v + "'");
            c.train.ssr = v == "ssr";
          },
          [](const RunConfig& c) { return std::string(c.train.ssr ? "ssr" : "softras-only"); }},
      FLAG(rotation_augment, "rotated duplicates of matcher pairs"),
      NUM(seed, std::uint64_t, "run seed"),
      NUM(lr_recon, double, "reconstructor learning rate"),
      NUM(lr_siam, double, "matcher learning rate"),
      NUM(beta1, double, "Adam beta1"),
      NUM(beta2, double, "Adam beta2"),
      NUM(batch_recon, int, "reconstruction batch size"),
      NUM(batch_siam, int, "pairs per matcher step, before rotated duplicates"),
      NUM(epochs, int, "training epochs"),
      NUM(iters_per_epoch, int, "iterations per epoch"),
      NUM(cycle_period, int, "iterations between pseudo-labeling cycles"),
      NUM(lambda_g, double, "Laplacian loss weight"),
      NUM(sigma, double, "soft rasterizer sharpness in pixel^2"),
      NUM(clip_norm, double, "global gradient norm clip, <= 0 disables"),
      NUM(confidence, double, "pseudo-label confidence threshold"),
      FLAG(gate, "require 100% probe accuracy before pseudo-labeling"),
      NUM(mining_refresh, int, "steps between mining embedding refreshes"),
      NUM(hard_fraction, double, "share of hard pairs in each matcher batch"),
      NUM(eval_resolution, int, "voxel resolution for IoU"),
      NUM(views_per_sample, int, "silhouettes supervising each input (its own view plus views of the same object)"),
  };
  return k;
}

#undef NUM
#undef FLAG

const Key& find_key(const std::string& key) {
  for (const auto& k : keys())
    if (key == k.name) return k;
  throw ConfigError("config: unknown key '" + key + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) { find_key(key).set(*this, value); }

std::string RunConfig::get(const std::string& key) const { return find_key(key).get(*this); }

RunConfig RunConfig::parse(const std::string& text, const std::string& source) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  for (int line_no = 1; std::getline(in, line); ++line_no) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key = value");
    try {
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& k : keys()) out += std::string(k.name) + " = " + k.get(*this) + "\n";
  return out;
}

std::vector<KeyDoc> documented_keys() {
  const RunConfig d;
  std::vector<KeyDoc> out;
  for (const auto& k : keys()) out.push_back({k.name, k.help, k.get(d)});
  return out;
}

}  // namespace ssr::config
