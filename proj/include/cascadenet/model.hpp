#pragma once

// Path-set cascade regressor.
//
// Each sampled path is embedded through a shared table A (H x (N_node + 1),
// last column = PAD), read by a forward and a backward GRU, and the
// concatenated hidden states are pooled with weights
//     w(k, i) = (1 - a_c)^floor(k / B) * a_c * lambda_i
// where a_c = sigmoid(geo_logits[bucket(|V_c|)]) and lambda = softmax(lambda_logits).
// A linear head (optionally preceded by one tanh layer) maps the 2H pooled
// vector to the predicted scaled growth.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "cascadenet/autodiff.hpp"
#include "cascadenet/walker.hpp"

namespace cascadenet {

enum class Variant {
  Full,       // jump-started walks, learned attention
  Bag,        // length-1 paths over the cascade's nodes
  Fixed,      // k x t jump-started walks, uniform 1/(k t) pooling
  RootStart,  // walks start at roots only, learned attention
};

Variant parse_variant(std::string_view name);  // full | bag | fixed | root
std::string_view variant_name(Variant v);

enum class GruForm {
  Standard,  // h_i = u * hhat_i + (1 - u) * h_{i-1}
  Literal,   // h_i = u * hhat_{i-1} + (1 - u) * h_{i-1}, hhat_0 = 0
};

struct ModelConfig {
  std::size_t H = 16;
  std::size_t K = 200;
  std::size_t T = 10;
  std::size_t B = 5;
  std::size_t n_buckets = 12;
  std::size_t n_node = 0;  // nodes in the global graph; PAD is column n_node
  Variant variant = Variant::Full;
  std::size_t fixed_k = 0;  // Fixed variant grid; 0 means K / T
  std::size_t fixed_t = 0;
  bool normalize_attention = false;
  GruForm gru_form = GruForm::Standard;
  std::size_t mlp_hidden = 0;
  std::uint64_t seed = 0;

  // Throws ConfigError (including K not a multiple of B for attention variants).
  void validate() const;

  // Shape of the path grid this variant consumes.
  std::size_t rows() const;
  std::size_t length() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Walk settings matching the variant's path grid and start mode.
WalkConfig walk_config_for(const ModelConfig& cfg, Scorer scorer, double alpha, std::uint64_t seed);

// floor(log2(size + 1)) clamped to [0, n_buckets - 1].
std::size_t size_bucket(std::size_t cascade_size, std::size_t n_buckets);

// Named parameter arrays in a fixed canonical order.
class ModelParams {
 public:
  ModelParams() = default;

  static ModelParams init(const ModelConfig& cfg);
  static ModelParams zeros_like(const ModelParams& other);

  std::size_t size() const noexcept { return arrays_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  ad::Matrix& operator[](std::size_t i) { return arrays_[i]; }
  const ad::Matrix& operator[](std::size_t i) const { return arrays_[i]; }
  ad::Matrix& at(std::string_view name);
  const ad::Matrix& at(std::string_view name) const;
  bool has(std::string_view name) const;

  std::vector<std::string>& names() { return names_; }
  const std::vector<std::string>& names() const { return names_; }
  std::vector<ad::Matrix>& arrays() { return arrays_; }
  const std::vector<ad::Matrix>& arrays() const { return arrays_; }

  std::size_t n_values() const;
  bool all_finite() const;

  void add(std::string name, ad::Matrix m);

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<ad::Matrix> arrays_;
};

// Parameters bound as leaves on one tape.
struct BoundParams {
  std::vector<ad::Var> vars;  // aligned with ModelParams
  ad::Var A;
  struct Gru {
    ad::Var W_u, W_r, W_h, U_u, U_r, U_h, b_u, b_r, b_h;
  } fwd, bwd;
  ad::Var lambda_logits;
  ad::Var geo_logits;
  ad::Var hidden_w, hidden_b;  // only with mlp_hidden > 0
  ad::Var out_w, out_b;
};

BoundParams bind(ad::Tape& tape, const ModelParams& params, bool requires_grad);
// Same, over tensors already on a tape (aligned with params' names).
BoundParams bind_vars(const ModelParams& params, std::vector<ad::Var> vars);

// Embedding rows for a sequence of node ids (PAD allowed): row k = A[:, ids[k]].
ad::Var embed(const BoundParams& p, std::span<const NodeId> ids);

// One GRU step over a batch of rows: x and h_prev are rows x H.
ad::Var gru_cell(ad::Var x, ad::Var h_prev, const BoundParams::Gru& g);

// Bidirectional encoding of every path: element i is the K x 2H matrix of
// concatenated forward/backward states at position i.
std::vector<ad::Var> encode_paths(const BoundParams& p, const ModelConfig& cfg, const PathSet& paths);

// K x T matrix of pooling weights (1 - a)^floor(k/B) * a * lambda_i, with a a
// 1 x 1 tensor and lambda a 1 x T row. Requires K % B == 0.
ad::Var attention_weights(ad::Var a, ad::Var lambda, std::size_t K, std::size_t B);

// Closed form of the total pooled mass: B * (1 - (1 - a)^(K/B)).
double attention_mass(double a, std::size_t K, std::size_t B);

// Pools encoded paths into the 1 x 2H graph representation.
ad::Var attention_assemble(const BoundParams& p, const ModelConfig& cfg, std::span<const ad::Var> encoded,
                           std::size_t cascade_size);

// f(g_c) as a 1 x 1 tensor. Throws ConfigError when the path grid does not
// match the variant.
ad::Var predict(const BoundParams& p, const ModelConfig& cfg, const PathSet& paths, std::size_t cascade_size);

// Convenience forward pass on a private tape.
double predict_value(const ModelParams& params, const ModelConfig& cfg, const PathSet& paths, std::size_t cascade_size);

// Checkpoint: {format_version, config, params: {name: {shape, data}}}.
nlohmann::json checkpoint_to_json(const ModelConfig& cfg, const ModelParams& params,
                                  const nlohmann::json& extra = nlohmann::json::object());
// Validates every array shape against the embedded config.
std::pair<ModelConfig, ModelParams> checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams& params,
                     const nlohmann::json& extra = nlohmann::json::object());
std::pair<ModelConfig, ModelParams> load_checkpoint(const std::filesystem::path& path);

// Overwrites embedding columns from `id<TAB>v_1 ... v_H` lines (tab or space
// separated values). Returns the number of imported rows.
std::size_t import_embeddings(const std::filesystem::path& path, ModelParams& params);

}  // namespace cascadenet
