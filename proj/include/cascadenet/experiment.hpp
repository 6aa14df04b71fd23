#pragma once

// Run configuration and the end-to-end experiment steps behind the
// command-line tool: dataset generation, walk dumps, training, evaluation,
// the feature baseline and ablation tables.
//
// Settings are flat dotted keys ("walk.K", "train.lr", ...). Precedence, low
// to high: defaults, config file, CASCADE_SEED, explicit overrides.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "cascadenet/cascade_gen.hpp"
#include "cascadenet/dataset_io.hpp"
#include "cascadenet/features.hpp"
#include "cascadenet/model.hpp"
#include "cascadenet/trainer.hpp"
#include "cascadenet/walker.hpp"

namespace cascadenet {

struct ConfigKey {
  std::string name;
  nlohmann::json default_value;
  std::string alias;  // extra flag spelling without the prefix, may be empty
  std::string help;
};

class RunConfig {
 public:
  RunConfig();

  static const std::vector<ConfigKey>& keys();

  // Unknown keys and ill-typed values throw ConfigError.
  void merge(const nlohmann::json& flat);
  void merge_file(const std::filesystem::path& path);
  void apply_env();  // CASCADE_SEED
  void set(const std::string& key, const std::string& text);

  const nlohmann::json& values() const { return values_; }
  const nlohmann::json& at(const std::string& key) const;

  // Keys under the given prefixes (plus "seed"), for echoing into outputs.
  nlohmann::json echo(std::initializer_list<std::string_view> prefixes) const;

  std::uint64_t seed() const;
  unsigned threads() const;  // 0 in the config means all cores
  SyntheticConfig synthetic() const;
  double downsample_fraction() const;
  std::array<double, 3> split_ratios() const;
  Scorer scorer() const;
  ModelConfig model(std::size_t n_node) const;
  WalkConfig walk(const ModelConfig& m) const;
  TrainConfig train() const;

 private:
  nlohmann::json values_;
};

// Writes global.tsv, train/val/test.jsonl and meta.json. Returns a summary.
nlohmann::json generate_dataset(const RunConfig& rc, const std::filesystem::path& out_dir);

// JSON Lines walk dump; PAD is written as -1.
nlohmann::json dump_walks(const RunConfig& rc, const Dataset& data, const std::string& split,
                          const std::filesystem::path& out_file);

struct TrainingRun {
  ModelConfig model;
  WalkConfig walk;
  TrainResult result;
  double untrained_test_mse = 0.0;  // NaN without a test split
  nlohmann::json report;            // what report.json holds
};

// Writes ckpt_best.json and report.json when out_dir is given.
TrainingRun run_training(const RunConfig& rc, const Dataset& data, const std::optional<std::filesystem::path>& out_dir);

nlohmann::json evaluate_checkpoint(const std::filesystem::path& ckpt, const Dataset& data, const std::string& split,
                                   unsigned threads);

struct BaselineOptions {
  std::vector<double> l2_grid;  // empty: 1, 0.5, 0.1, 0.05, ..., 1e-8
  FeatureOptions features;
  std::optional<std::filesystem::path> dump_csv;
};

std::vector<double> default_l2_grid();

nlohmann::json run_features_baseline(const RunConfig& rc, const Dataset& data, const BaselineOptions& opt);

struct AblationRow {
  Variant variant;
  Scorer scorer;
};
std::vector<AblationRow> parse_ablation_rows(std::string_view spec);  // "full:edge,bag:deg,..."
std::vector<AblationRow> default_ablation_rows();

struct AblationOutcome {
  nlohmann::json table;  // rows in the requested order
  std::string markdown;
  bool partial = false;
};

AblationOutcome run_ablation(const RunConfig& rc, const Dataset& data, const std::vector<AblationRow>& rows,
                             const std::optional<std::filesystem::path>& out_dir);

}  // namespace cascadenet
