#pragma once

// Training and evaluation of the path-set regressor.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "cascadenet/cascade_gen.hpp"
#include "cascadenet/model.hpp"
#include "cascadenet/walker.hpp"

namespace cascadenet {

enum class Optimizer { Adam, Sgd };
Optimizer parse_optimizer(std::string_view name);  // adam | sgd
std::string_view optimizer_name(Optimizer o);

struct TrainConfig {
  double learning_rate = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs_max = 50;
  std::size_t patience = 10;
  double grad_clip_norm = 5.0;  // 0 disables clipping
  double l2_coeff = 0.0;
  std::size_t batch_cascades = 16;
  Optimizer optimizer = Optimizer::Adam;
  bool resample_paths = false;  // draw fresh train paths every epoch
  int horizon = 0;              // label horizon; 0 means the record's first
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

// (1/n) sum (pred - label)^2. Throws DomainError on empty or mismatched input.
double mse(std::span<const double> preds, std::span<const double> labels);

// A cascade ready for the model: frozen paths plus its label.
struct PreparedCascade {
  std::string id;
  std::size_t size = 0;
  double label = 0.0;
  PathSet paths;
};

// Paths for each record use cascade_walk_seed(walk.seed, id), so they do not
// depend on file order or thread count.
std::vector<PreparedCascade> prepare_cascades(const std::vector<CascadeRecord>& records, const GlobalGraph& g,
                                              const WalkConfig& walk, int horizon, unsigned threads);

struct EvalResult {
  double mse = 0.0;
  std::vector<std::string> ids;
  std::vector<double> preds;
  std::vector<double> labels;
  std::vector<double> residuals;  // pred - label

  nlohmann::json to_json() const;
};

// Throws DomainError on an empty set.
EvalResult evaluate(const ModelParams& params, const ModelConfig& cfg, std::span<const PreparedCascade> data,
                    unsigned threads);

struct EpochStats {
  std::size_t epoch = 0;  // 0 is the untrained model
  double train_mse = 0.0;
  double val_mse = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> history;  // history[0] is before any update
  std::size_t best_epoch = 0;
  double best_val_mse = 0.0;
  std::optional<double> test_mse;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  bool stopped_early = false;

  nlohmann::json to_json() const;
};

struct TrainData {
  std::span<const PreparedCascade> train;
  std::span<const PreparedCascade> val;   // when empty, train MSE drives early stopping
  std::span<const PreparedCascade> test;  // optional
  // Needed only with resample_paths.
  const std::vector<CascadeRecord>* train_records = nullptr;
  const GlobalGraph* graph = nullptr;
  WalkConfig walk;
};

struct TrainOptions {
  unsigned threads = 1;
  std::optional<std::filesystem::path> checkpoint_path;  // written at every new best
  nlohmann::json checkpoint_extra = nlohmann::json::object();
  std::function<void(const EpochStats&)> on_epoch;
  std::optional<ModelParams> initial;  // defaults to ModelParams::init(cfg)
};

struct TrainResult {
  ModelParams params;  // best-validation parameters
  TrainReport report;
};

// Throws NumericalError naming the first non-finite tensor when a loss or
// parameter stops being finite.
TrainResult train(const ModelConfig& cfg, const TrainData& data, const TrainConfig& tc, const TrainOptions& opt = {});

// Gradient of the mean squared error over `batch` (plus l2 term), summed in
// batch order. Exposed for testing.
ModelParams batch_gradient(const ModelParams& params, const ModelConfig& cfg, std::span<const PreparedCascade* const> batch,
                           double l2_coeff, unsigned threads, double* loss_out = nullptr);

struct GraphStats {
  std::size_t count = 0;
  double n_nodes = 0.0;
  double n_edges = 0.0;
  double mean_out_degree = 0.0;
  double edge_density = 0.0;
};

struct ErrorAnalysis {
  GraphStats a_better;  // top_n cascades where A's squared error is lower, by margin
  GraphStats b_better;
  GraphStats overall;   // every cascade in the set

  nlohmann::json to_json() const;
};

// Residuals must list the same cascade ids in the same order; `records` must
// contain each id. Throws DomainError otherwise.
ErrorAnalysis error_analysis(const EvalResult& a, const EvalResult& b, const std::vector<CascadeRecord>& records,
                             const GlobalGraph& g, std::size_t top_n = 100);

}  // namespace cascadenet
