#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "debris/dataset.hpp"
#include "debris/evaluation.hpp"
#include "debris/preprocess.hpp"

namespace debris {

/// Run configuration, read from a JSON file. Relative `dataset_root` and
/// `backbone` paths resolve against the config file's directory; artifact
/// paths resolve against `output_dir`. Command-line flags override the
/// corresponding keys.
struct RunConfig {
  std::filesystem::path config_dir;
  std::uint64_t seed = 0;
  std::filesystem::path dataset_root;
  std::filesystem::path backbone;
  std::filesystem::path output_dir;
  int jobs = 1;

  SplitFractions fractions;
  bool empty_class_is_error = false;
  AugmentationPolicy augmentation;
  int folds = 5;
  std::vector<Family> families{kAllFamilies.begin(), kAllFamilies.end()};
  /// Per-family grid overrides. For the RBF family a "gamma_scale" entry
  /// multiplies the median-heuristic gamma.
  std::vector<FamilySearch> grids;

  std::filesystem::path manifest_file = "manifest.txt";
  std::filesystem::path features_file = "features.dbfc";
  std::filesystem::path standardizer_file = "standardizer.dbsp";
  std::filesystem::path models_dir = "models";
  std::filesystem::path report_file = "report.txt";
  std::filesystem::path confusion_csv_file = "confusion.csv";

  std::filesystem::path artifact(const std::filesystem::path& p) const { return output_dir / p; }
  std::filesystem::path model_path(Family family) const;

  /// Seeds of the individual stages, all derived from `seed`.
  std::uint64_t split_seed() const;
  std::uint64_t augmentation_seed() const;
  std::uint64_t cv_seed() const;

  /// Grid for `family`: the override if present, else the default grid
  /// (RBF centred on `gamma0`).
  HyperGrid grid_for(Family family, double gamma0) const;
};

struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output_dir;
  std::optional<int> jobs;
};

/// Parses and validates; every problem raises ConfigError naming the key.
RunConfig parse_config(const std::string& json_text, const std::filesystem::path& config_dir,
                       const ConfigOverrides& overrides = {});
RunConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

}  // namespace debris
