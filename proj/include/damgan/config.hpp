#pragma once

#include "damgan/model.hpp"
#include "damgan/trainer.hpp"

#include <filesystem>
#include <istream>
#include <stdexcept>
#include <string>
#include <vector>

namespace damgan::cli {

/// Bad config text, unknown key, or an out-of-range value. The message names the key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Paths {
  std::filesystem::path data_root;
  std::filesystem::path manifest;  // empty: <data_root>/manifest.tsv
  std::filesystem::path out_dir = "runs/default";

  std::filesystem::path manifest_or_default() const {
    return manifest.empty() ? data_root / "manifest.tsv" : manifest;
  }
  friend bool operator==(const Paths&, const Paths&) = default;
};

/// Everything a training run reads, merged from [model], [train], [mask] and [paths].
struct RunConfig {
  model::ModelConfig model;
  train::TrainConfig train;
  Paths paths;

  /// Validates both configs, rethrowing as ConfigError.
  void validate() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Applies `key = value` lines under [section] headers on top of `base`.
/// '#' and ';' start comments. Unknown sections or keys are errors.
RunConfig parse_config(std::istream& in, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& file, RunConfig base = {});

/// Sets one "section.key" to a textual value, as a config line would.
void apply_override(RunConfig& cfg, const std::string& dotted_key, const std::string& value);

/// "section.key=value" form of apply_override.
void apply_override(RunConfig& cfg, const std::string& assignment);

/// Normalized config text: every key, fixed order, shortest round-trip numbers.
std::string dump_config(const RunConfig& cfg);

/// All accepted "section.key" names in dump order.
std::vector<std::string> config_keys();

}  // namespace damgan::cli
