#pragma once

// Flat `key = value` run configuration covering every trainer tunable plus
// dataset and output paths.

#include <filesystem>
#include <string>
#include <vector>

#include "ssr/trainer.hpp"

namespace ssr::config {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  train::TrainConfig train;
  std::string manifest;  // dataset manifest.json
  std::string out = "run";
  int n_labeled = 2;     // labeled objects per class; the split is redrawn from the dataset seed

  /// Throws ConfigError for an unknown key or an unparsable value.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  /// Lines of `key = value`; `#` starts a comment. Unknown keys are errors.
  static RunConfig parse(const std::string& text, const std::string& source = "config");
  static RunConfig load(const std::filesystem::path& path);
  std::string to_text() const;
};

struct KeyDoc {
  std::string key;
  std::string help;
  std::string default_value;
};
/// Every key with its help text and default.
std::vector<KeyDoc> documented_keys();

}  // namespace ssr::config
