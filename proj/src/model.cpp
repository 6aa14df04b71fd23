#include "cascadenet/model.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cascadenet/errors.hpp"
#include "cascadenet/rng.hpp"

namespace cascadenet {

using ad::Matrix;
using ad::Tape;
using ad::Var;
using nlohmann::json;

Variant parse_variant(std::string_view name) {
  if (name == "full") return Variant::Full;
  if (name == "bag") return Variant::Bag;
  if (name == "fixed") return Variant::Fixed;
  if (name == "root") return Variant::RootStart;
  throw ConfigError("unknown variant '" + std::string(name) + "' (expected full, bag, fixed or root)");
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::Bag: return "bag";
    case Variant::Fixed: return "fixed";
    case Variant::RootStart: return "root";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (H < 1) throw ConfigError("model.H must be >= 1");
  if (K < 1 || T < 1) throw ConfigError("model.K and model.T must be >= 1");
  if (B < 1) throw ConfigError("model.B must be >= 1");
  if (n_buckets < 1) throw ConfigError("model.n_buckets must be >= 1");
  if (n_node < 1) throw ConfigError("model.n_node must be >= 1");
  if (variant != Variant::Fixed) {
    if (B > K) throw ConfigError("model.B must not exceed model.K");
    if (K % B != 0) {
      throw ConfigError("model.K (" + std::to_string(K) + ") must be a multiple of model.B (" + std::to_string(B) + ")");
    }
  }
}

std::size_t ModelConfig::rows() const {
  if (variant == Variant::Fixed && fixed_k > 0) return fixed_k;
  return K;
}

std::size_t ModelConfig::length() const {
  switch (variant) {
    case Variant::Bag: return 1;
    case Variant::Fixed: return fixed_t > 0 ? fixed_t : T;
    default: return T;
  }
}

json to_json(const ModelConfig& c) {
  return json{{"H", c.H},
              {"K", c.K},
              {"T", c.T},
              {"B", c.B},
              {"n_buckets", c.n_buckets},
              {"n_node", c.n_node},
              {"variant", variant_name(c.variant)},
              {"fixed_k", c.fixed_k},
              {"fixed_t", c.fixed_t},
              {"normalize_attention", c.normalize_attention},
              {"gru_form", c.gru_form == GruForm::Standard ? "standard" : "literal"},
              {"mlp_hidden", c.mlp_hidden},
              {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  try {
    c.H = j.at("H").get<std::size_t>();
    c.K = j.at("K").get<std::size_t>();
    c.T = j.at("T").get<std::size_t>();
    c.B = j.at("B").get<std::size_t>();
    c.n_buckets = j.at("n_buckets").get<std::size_t>();
    c.n_node = j.at("n_node").get<std::size_t>();
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.fixed_k = j.value("fixed_k", std::size_t{0});
    c.fixed_t = j.value("fixed_t", std::size_t{0});
    c.normalize_attention = j.value("normalize_attention", false);
    const auto form = j.value("gru_form", std::string("standard"));
    if (form != "standard" && form != "literal") throw ConfigError("unknown gru_form '" + form + "'");
    c.gru_form = form == "standard" ? GruForm::Standard : GruForm::Literal;
    c.mlp_hidden = j.value("mlp_hidden", std::size_t{0});
    c.seed = j.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad model config: ") + e.what());
  }
  c.validate();
  return c;
}

WalkConfig walk_config_for(const ModelConfig& cfg, Scorer scorer, double alpha, std::uint64_t seed) {
  WalkConfig w;
  w.K = cfg.rows();
  w.T = cfg.length();
  w.alpha = alpha;
  w.scorer = scorer;
  w.seed = seed;
  switch (cfg.variant) {
    case Variant::Bag: w.start_mode = StartMode::EachNode; break;
    case Variant::RootStart: w.start_mode = StartMode::RootsOnly; break;
    default: w.start_mode = StartMode::Jump; break;
  }
  return w;
}

std::size_t size_bucket(std::size_t cascade_size, std::size_t n_buckets) {
  if (n_buckets == 0) throw DomainError("n_buckets must be >= 1");
  // Exact floor(log2(sz + 1)) from the bit width.
  const std::size_t b = static_cast<std::size_t>(std::bit_width(cascade_size + 1)) - 1;
  return std::min(b, n_buckets - 1);
}

// ---------------------------------------------------------------------------
// Parameters

void ModelParams::add(std::string name, Matrix m) {
  names_.push_back(std::move(name));
  arrays_.push_back(std::move(m));
}

ad::Matrix& ModelParams::at(std::string_view name) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return arrays_[i];
  }
  throw DomainError("no parameter named '" + std::string(name) + "'");
}

const ad::Matrix& ModelParams::at(std::string_view name) const {
  return const_cast<ModelParams*>(this)->at(name);
}

bool ModelParams::has(std::string_view name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::size_t ModelParams::n_values() const {
  std::size_t n = 0;
  for (const auto& a : arrays_) n += a.size();
  return n;
}

bool ModelParams::all_finite() const {
  for (const auto& a : arrays_) {
    for (double v : a.data) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

ModelParams ModelParams::zeros_like(const ModelParams& other) {
  ModelParams z;
  for (std::size_t i = 0; i < other.size(); ++i) z.add(other.name(i), Matrix(other[i].rows, other[i].cols));
  return z;
}

namespace {

constexpr const char* kGateNames[] = {"W_u", "W_r", "W_h", "U_u", "U_r", "U_h", "b_u", "b_r", "b_h"};

Matrix uniform_matrix(std::size_t r, std::size_t c, double bound, CounterRng& rng) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.uniform(-bound, bound);
  return m;
}

// Expected shape of every canonical parameter for a config.
std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> layout(const ModelConfig& cfg) {
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> out;
  const std::size_t H = cfg.H;
  out.push_back({"A", {H, cfg.n_node + 1}});
  for (const char* dir : {"fwd", "bwd"}) {
    for (int g = 0; g < 9; ++g) {
      const bool bias = g >= 6;
      out.push_back({std::string(dir) + "." + kGateNames[g], {bias ? 1 : H, H}});
    }
  }
  out.push_back({"lambda_logits", {1, cfg.length()}});
  out.push_back({"geo_logits", {1, cfg.n_buckets}});
  if (cfg.mlp_hidden > 0) {
    out.push_back({"mlp.hidden_w", {cfg.mlp_hidden, 2 * H}});
    out.push_back({"mlp.hidden_b", {1, cfg.mlp_hidden}});
    out.push_back({"mlp.weight", {cfg.mlp_hidden, 1}});
  } else {
    out.push_back({"mlp.weight", {2 * H, 1}});
  }
  out.push_back({"mlp.bias", {1, 1}});
  return out;
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg) {
  cfg.validate();
  CounterRng rng(derive_seed(cfg.seed, "model-init"));
  const double gate_bound = 1.0 / std::sqrt(static_cast<double>(cfg.H));
  ModelParams p;
  for (const auto& [name, shape] : layout(cfg)) {
    const auto [r, c] = shape;
    if (name == "A") {
      p.add(name, uniform_matrix(r, c, 0.05, rng));
    } else if (name == "geo_logits") {
      // a_c = B / K: the initial attention reaches every mini-batch.
      const double a = std::min(0.5, static_cast<double>(cfg.B) / static_cast<double>(cfg.rows()));
      p.add(name, Matrix(r, c, std::log(a / (1.0 - a))));
    } else if (name.ends_with(".b_u") || name.ends_with(".b_r") || name.ends_with(".b_h") || name == "mlp.bias" ||
               name == "mlp.hidden_b" || name == "lambda_logits") {
      p.add(name, Matrix(r, c));
    } else if (name == "mlp.weight" || name == "mlp.hidden_w") {
      const std::size_t fan_in = name == "mlp.weight" ? r : c;
      p.add(name, uniform_matrix(r, c, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng));
    } else {
      p.add(name, uniform_matrix(r, c, gate_bound, rng));
    }
  }
  return p;
}

BoundParams bind(Tape& tape, const ModelParams& params, bool requires_grad) {
  std::vector<Var> vars;
  for (std::size_t i = 0; i < params.size(); ++i) vars.push_back(tape.leaf(params[i], requires_grad, params.name(i)));
  return bind_vars(params, std::move(vars));
}

BoundParams bind_vars(const ModelParams& params, std::vector<Var> vars) {
  if (vars.size() != params.size()) throw DomainError("bind_vars: one tensor per parameter array is required");
  BoundParams b;
  b.vars = std::move(vars);
  auto get = [&](std::string_view name) -> Var {
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params.name(i) == name) return b.vars[i];
    }
    throw DomainError("parameter set lacks '" + std::string(name) + "'");
  };
  b.A = get("A");
  for (auto [dir, gru] : {std::pair{"fwd", &b.fwd}, std::pair{"bwd", &b.bwd}}) {
    Var* slots[] = {&gru->W_u, &gru->W_r, &gru->W_h, &gru->U_u, &gru->U_r, &gru->U_h, &gru->b_u, &gru->b_r, &gru->b_h};
    for (int g = 0; g < 9; ++g) *slots[g] = get(std::string(dir) + "." + kGateNames[g]);
  }
  b.lambda_logits = get("lambda_logits");
  b.geo_logits = get("geo_logits");
  if (params.has("mlp.hidden_w")) {
    b.hidden_w = get("mlp.hidden_w");
    b.hidden_b = get("mlp.hidden_b");
  }
  b.out_w = get("mlp.weight");
  b.out_b = get("mlp.bias");
  return b;
}

// ---------------------------------------------------------------------------
// Forward pass

Var embed(const BoundParams& p, std::span<const NodeId> ids) {
  std::vector<std::size_t> cols(ids.begin(), ids.end());
  return ad::gather_columns(p.A, cols);
}

namespace {

// Transposed, stacked gate matrices so a batch of rows is one matmul.
struct GruPack {
  Var Wt;     // H x 3H  ([W_u; W_r; W_h]^T)
  Var Ut;     // H x 3H
  Var bias;   // rows x 3H
  Var zeros;  // rows x H initial state
};

GruPack pack(const BoundParams::Gru& g, std::size_t rows) {
  Tape& t = *g.W_u.tape();
  const std::size_t H = g.W_u.rows();
  GruPack k;
  k.Wt = ad::transpose(ad::concat({g.W_u, g.W_r, g.W_h}, 0));
  k.Ut = ad::transpose(ad::concat({g.U_u, g.U_r, g.U_h}, 0));
  k.bias = ad::repeat_rows(ad::concat({g.b_u, g.b_r, g.b_h}, 1), rows);
  k.zeros = t.constant(Matrix(rows, H), "h0");
  return k;
}

struct StepOut {
  Var h;
  Var hhat;
};

// pre_x = x W^T + b (rows x 3H); returns the new state and candidate.
StepOut gru_step(Var pre_x, Var h_prev, Var hhat_prev, const GruPack& k, std::size_t H, GruForm form) {
  Var hu = ad::matmul(h_prev, k.Ut);
  Var u = ad::sigmoid(ad::add(ad::slice(pre_x, 1, 0, H), ad::slice(hu, 1, 0, H)));
  Var r = ad::sigmoid(ad::add(ad::slice(pre_x, 1, H, 2 * H), ad::slice(hu, 1, H, 2 * H)));
  Var hhat = ad::tanh(ad::add(ad::slice(pre_x, 1, 2 * H, 3 * H), ad::mul(r, ad::slice(hu, 1, 2 * H, 3 * H))));
  Var candidate = form == GruForm::Standard ? hhat : hhat_prev;
  // u * c + (1 - u) * h_prev == h_prev + u * (c - h_prev)
  Var h = ad::add(h_prev, ad::mul(u, ad::sub(candidate, h_prev)));
  return {h, hhat};
}

}  // namespace

Var gru_cell(Var x, Var h_prev, const BoundParams::Gru& g) {
  const std::size_t H = g.W_u.rows();
  if (x.cols() != H || h_prev.cols() != H || x.rows() != h_prev.rows()) {
    throw ShapeError("gru_cell: x is " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) + ", h_prev is " +
                     std::to_string(h_prev.rows()) + "x" + std::to_string(h_prev.cols()) + ", H=" + std::to_string(H));
  }
  GruPack k = pack(g, x.rows());
  Var pre_x = ad::add(ad::matmul(x, k.Wt), k.bias);
  return gru_step(pre_x, h_prev, k.zeros, k, H, GruForm::Standard).h;
}

std::vector<Var> encode_paths(const BoundParams& p, const ModelConfig& cfg, const PathSet& paths) {
  const std::size_t K = paths.K();
  const std::size_t T = paths.T();
  const std::size_t H = cfg.H;
  if (p.A.rows() != H) throw ShapeError("encode_paths: embedding has " + std::to_string(p.A.rows()) + " rows, H=" + std::to_string(H));
  // Step-major id order: rows [i*K, (i+1)*K) hold position i of every path.
  std::vector<NodeId> ids(K * T);
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t k = 0; k < K; ++k) ids[i * K + k] = paths.at(k, i);
  Var X = embed(p, ids);

  auto run = [&](const BoundParams::Gru& g, bool reverse) {
    GruPack k = pack(g, K);
    Var XW = ad::matmul(X, k.Wt);
    std::vector<Var> states(T);
    Var h = k.zeros;
    Var hhat = k.zeros;
    for (std::size_t s = 0; s < T; ++s) {
      const std::size_t i = reverse ? T - 1 - s : s;
      Var pre = ad::add(ad::slice(XW, 0, i * K, (i + 1) * K), k.bias);
      auto out = gru_step(pre, h, hhat, k, H, cfg.gru_form);
      h = out.h;
      hhat = out.hhat;
      states[i] = h;
    }
    return states;
  };
  auto fwd = run(p.fwd, false);
  auto bwd = run(p.bwd, true);
  std::vector<Var> out(T);
  for (std::size_t i = 0; i < T; ++i) out[i] = ad::concat({fwd[i], bwd[i]}, 1);
  return out;
}

Var attention_weights(Var a, Var lambda, std::size_t K, std::size_t B) {
  if (B == 0 || K % B != 0) throw ConfigError("attention needs K to be a multiple of B");
  if (a.rows() != 1 || a.cols() != 1) throw ShapeError("attention_weights: a_c must be 1x1");
  if (lambda.rows() != 1) throw ShapeError("attention_weights: lambda must be a row");
  Tape& t = *a.tape();
  const std::size_t M = K / B;
  Var one_minus = ad::add_scalar(ad::scale(a, -1.0), 1.0);
  std::vector<Var> per_batch;
  per_batch.reserve(M);
  for (std::size_t m = 0; m < M; ++m) {
    per_batch.push_back(ad::mul(ad::power(one_minus, static_cast<double>(m)), a));
  }
  Var g = ad::concat(std::span<const Var>(per_batch), 0);  // M x 1
  Matrix expand(K, M);
  for (std::size_t k = 0; k < K; ++k) expand(k, k / B) = 1.0;
  Var w = ad::matmul(t.constant(std::move(expand), "batch_expand"), g);  // K x 1
  return ad::matmul(w, lambda);                                          // K x T
}

double attention_mass(double a, std::size_t K, std::size_t B) {
  return static_cast<double>(B) * (1.0 - std::pow(1.0 - a, static_cast<double>(K / B)));
}

Var attention_assemble(const BoundParams& p, const ModelConfig& cfg, std::span<const Var> encoded,
                       std::size_t cascade_size) {
  if (encoded.empty()) throw ShapeError("attention_assemble: no encoded positions");
  Tape& t = *encoded[0].tape();
  const std::size_t T = encoded.size();
  const std::size_t K = encoded[0].rows();
  Var weights;
  if (cfg.variant == Variant::Fixed) {
    weights = t.constant(Matrix(K, T, 1.0 / static_cast<double>(K * T)), "uniform_attention");
  } else {
    if (p.lambda_logits.cols() != T) {
      throw ConfigError("path length " + std::to_string(T) + " does not match lambda length " +
                        std::to_string(p.lambda_logits.cols()));
    }
    const std::size_t bucket = size_bucket(cascade_size, cfg.n_buckets);
    Var a = ad::sigmoid(ad::slice(p.geo_logits, 1, bucket, bucket + 1));
    Var lambda = ad::softmax(p.lambda_logits, 1);
    weights = attention_weights(a, lambda, K, cfg.B);
    if (cfg.normalize_attention) {
      // Divide by B * (1 - (1 - a)^(K/B)) so the weights sum to 1.
      Var tail = ad::power(ad::add_scalar(ad::scale(a, -1.0), 1.0), static_cast<double>(K / cfg.B));
      Var mass = ad::scale(ad::add_scalar(ad::scale(tail, -1.0), 1.0), static_cast<double>(cfg.B));
      weights = ad::scale(ad::power(mass, -1.0), weights);
    }
  }
  Var h;
  for (std::size_t i = 0; i < T; ++i) {
    Var col = ad::transpose(ad::slice(weights, 1, i, i + 1));  // 1 x K
    Var term = ad::matmul(col, encoded[i]);                    // 1 x 2H
    h = h.valid() ? ad::add(h, term) : term;
  }
  return h;
}

Var predict(const BoundParams& p, const ModelConfig& cfg, const PathSet& paths, std::size_t cascade_size) {
  if (paths.K() != cfg.rows() || paths.T() != cfg.length()) {
    throw ConfigError("variant " + std::string(variant_name(cfg.variant)) + " expects " + std::to_string(cfg.rows()) +
                      "x" + std::to_string(cfg.length()) + " paths, got " + std::to_string(paths.K()) + "x" +
                      std::to_string(paths.T()));
  }
  for (NodeId id : paths.ids()) {
    if (id > cfg.n_node) throw std::out_of_range("path node " + std::to_string(id) + " exceeds embedding table");
  }
  auto encoded = encode_paths(p, cfg, paths);
  Var h = attention_assemble(p, cfg, encoded, cascade_size);
  if (p.hidden_w.valid()) {
    h = ad::tanh(ad::add(ad::matmul(h, ad::transpose(p.hidden_w)), p.hidden_b));
  }
  return ad::add(ad::matmul(h, p.out_w), p.out_b);
}

double predict_value(const ModelParams& params, const ModelConfig& cfg, const PathSet& paths, std::size_t cascade_size) {
  Tape tape;
  auto bound = bind(tape, params, false);
  return predict(bound, cfg, paths, cascade_size).item();
}

// ---------------------------------------------------------------------------
// Checkpoints

json checkpoint_to_json(const ModelConfig& cfg, const ModelParams& params, const json& extra) {
  json arrays = json::object();
  for (std::size_t i = 0; i < params.size(); ++i) {
    arrays[params.name(i)] = json{{"shape", {params[i].rows, params[i].cols}}, {"data", params[i].data}};
  }
  json j{{"format_version", 1}, {"config", to_json(cfg)}, {"params", std::move(arrays)}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  return j;
}

std::pair<ModelConfig, ModelParams> checkpoint_from_json(const json& j) {
  if (!j.contains("format_version") || j["format_version"] != 1) throw ConfigError("unsupported checkpoint format_version");
  if (!j.contains("config") || !j.contains("params")) throw ConfigError("checkpoint lacks config or params");
  ModelConfig cfg = model_config_from_json(j["config"]);
  const auto& arrays = j["params"];
  ModelParams params;
  for (const auto& [name, shape] : layout(cfg)) {
    if (!arrays.contains(name)) throw ConfigError("checkpoint lacks parameter '" + name + "'");
    const auto& a = arrays[name];
    std::vector<std::size_t> s;
    std::vector<double> data;
    try {
      s = a.at("shape").get<std::vector<std::size_t>>();
      data = a.at("data").get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw ConfigError("checkpoint parameter '" + name + "': " + e.what());
    }
    if (s.size() != 2 || s[0] != shape.first || s[1] != shape.second || data.size() != s[0] * s[1]) {
      throw ConfigError("checkpoint parameter '" + name + "' has shape inconsistent with config (expected " +
                        std::to_string(shape.first) + "x" + std::to_string(shape.second) + ")");
    }
    params.add(name, Matrix(s[0], s[1], std::move(data)));
  }
  if (arrays.size() != params.size()) throw ConfigError("checkpoint has unexpected extra parameters");
  if (!params.all_finite()) throw ConfigError("checkpoint contains non-finite values");
  return {cfg, std::move(params)};
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams& params,
                     const json& extra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << checkpoint_to_json(cfg, params, extra).dump() << '\n';
}

std::pair<ModelConfig, ModelParams> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  return checkpoint_from_json(j);
}

std::size_t import_embeddings(const std::filesystem::path& path, ModelParams& params) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string(), 0);
  Matrix& A = params.at("A");
  const std::size_t H = A.rows;
  std::string line;
  std::size_t lineno = 0;
  std::size_t imported = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    std::istringstream ss(line);
    std::size_t id = 0;
    if (!(ss >> id)) throw ParseError("expected a node id", lineno);
    if (id >= A.cols) throw ParseError("node id " + std::to_string(id) + " outside embedding table", lineno);
    for (std::size_t i = 0; i < H; ++i) {
      double v = 0.0;
      if (!(ss >> v) || !std::isfinite(v)) throw ParseError("expected " + std::to_string(H) + " finite values", lineno);
      A(i, id) = v;
    }
    std::string rest;
    if (ss >> rest) throw ParseError("more than " + std::to_string(H) + " values", lineno);
    ++imported;
  }
  return imported;
}

}  // namespace cascadenet
