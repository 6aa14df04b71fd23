#include "cascadenet/experiment.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "cascadenet/errors.hpp"
#include "cascadenet/parallel.hpp"
#include "cascadenet/rng.hpp"

namespace cascadenet {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::uint64_t parse_u64(std::string_view text, const std::string& key) {
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + std::string(text) + "'");
  }
  return v;
}

double parse_double(std::string_view text, const std::string& key) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size() || !std::isfinite(v)) {
    throw ConfigError(key + ": expected a number, got '" + std::string(text) + "'");
  }
  return v;
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto end = comma == std::string_view::npos ? text.size() : comma;
    auto item = text.substr(start, end - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

// Coerces `v` to the type of `def`, or throws.
json coerce(const json& def, const json& v, const std::string& key) {
  if (def.is_number_unsigned()) {
    if (v.is_number_unsigned()) return v;
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (d >= 0 && std::floor(d) == d && d < 1.8e19) return static_cast<std::uint64_t>(d);
    }
    throw ConfigError(key + ": expected a non-negative integer");
  }
  if (def.is_number_float()) {
    if (!v.is_number()) throw ConfigError(key + ": expected a number");
    return v.get<double>();
  }
  if (def.is_boolean()) {
    if (!v.is_boolean()) throw ConfigError(key + ": expected true or false");
    return v;
  }
  if (def.is_string()) {
    if (!v.is_string()) throw ConfigError(key + ": expected a string");
    return v;
  }
  if (def.is_array()) {
    json items = v;
    if (v.is_number()) items = json::array({v});
    if (!items.is_array() || items.empty()) throw ConfigError(key + ": expected a non-empty list");
    json out = json::array();
    for (const auto& item : items) out.push_back(coerce(def.front(), item, key));
    return out;
  }
  throw ConfigError(key + ": unsupported setting type");
}

json parse_text(const json& def, const std::string& text, const std::string& key) {
  if (def.is_number_unsigned()) return parse_u64(text, key);
  if (def.is_number_float()) return parse_double(text, key);
  if (def.is_boolean()) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError(key + ": expected true or false, got '" + text + "'");
  }
  if (def.is_string()) return text;
  json out = json::array();
  for (const auto& item : split_list(text)) out.push_back(parse_text(def.front(), item, key));
  if (out.empty()) throw ConfigError(key + ": expected a non-empty list");
  return out;
}

}  // namespace

const std::vector<ConfigKey>& RunConfig::keys() {
  using U = std::uint64_t;
  static const std::vector<ConfigKey> k{
      {"seed", U{42}, "", "master seed; every random stream derives from it"},
      {"threads", U{0}, "", "worker threads (0: all cores)"},
      {"data.n_nodes", U{2000}, "", "nodes in the synthetic global graph"},
      {"data.attachment_degree", U{3}, "", "out-edges per new node"},
      {"data.activation_base", 0.15, "", "IC activation probability per unit weight"},
      {"data.t_steps", U{2}, "", "observation window in IC rounds"},
      {"data.horizons", json::array({U{2}}), "", "growth horizons in IC rounds"},
      {"data.n_cascades", U{500}, "", "usable cascades to generate"},
      {"data.downsample", 0.5, "", "fraction of zero-growth cascades dropped per split"},
      {"data.split", json::array({0.7, 0.15, 0.15}), "", "train,val,test ratios"},
      {"walk.K", U{200}, "K", "paths per cascade"},
      {"walk.T", U{10}, "T", "path length"},
      {"walk.alpha", 0.01, "alpha", "walk score smoother"},
      {"walk.scorer", "deg", "scorer", "edge | deg | DEG"},
      {"model.variant", "full", "variant", "full | bag | fixed | root"},
      {"model.H", U{16}, "H", "hidden size (= embedding size)"},
      {"model.B", U{5}, "B", "paths per attention mini-batch"},
      {"model.n_buckets", U{12}, "", "cascade-size buckets for the geometric attention"},
      {"model.fixed_k", U{0}, "", "fixed variant path count (0: K)"},
      {"model.fixed_t", U{0}, "", "fixed variant path length (0: T)"},
      {"model.normalize_attention", false, "normalize-attention", "divide pooled weights by their total mass"},
      {"model.gru_form", "standard", "gru-form", "standard | literal"},
      {"model.mlp_hidden", U{0}, "mlp-hidden", "tanh hidden units before the output (0: none)"},
      {"model.embedding_init", "", "embedding-init", "TSV of pretrained node vectors"},
      {"train.lr", 0.01, "lr", "learning rate"},
      {"train.epochs", U{40}, "epochs", "maximum epochs"},
      {"train.patience", U{10}, "patience", "epochs without validation improvement before stopping"},
      {"train.clip", 5.0, "", "gradient global-norm clip (0: off)"},
      {"train.l2", 0.01, "", "L2 coefficient on all parameters"},
      {"train.batch", U{16}, "", "cascades per gradient step"},
      {"train.optimizer", "adam", "optimizer", "adam | sgd"},
      {"train.resample", false, "", "resample training paths every epoch"},
      {"train.horizon", U{0}, "", "label horizon (0: first horizon in the data)"},
      {"train.adam_beta1", 0.9, "", "Adam beta1"},
      {"train.adam_beta2", 0.999, "", "Adam beta2"},
      {"train.adam_eps", 1e-8, "", "Adam epsilon"},
  };
  return k;
}

RunConfig::RunConfig() : values_(json::object()) {
  for (const auto& k : keys()) values_[k.name] = k.default_value;
}

const json& RunConfig::at(const std::string& key) const {
  if (!values_.contains(key)) throw ConfigError("unknown setting '" + key + "'");
  return values_.at(key);
}

void RunConfig::merge(const json& flat) {
  if (!flat.is_object()) throw ConfigError("config must be a JSON object of dotted keys");
  for (const auto& [key, v] : flat.items()) {
    if (v.is_object()) throw ConfigError("config key '" + key + "' must be flat (use dotted names)");
    values_[key] = coerce(at(key), v, key);
  }
}

void RunConfig::merge_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  merge(j);
}

void RunConfig::apply_env() {
  if (const char* s = std::getenv("CASCADE_SEED"); s && *s) values_["seed"] = parse_u64(s, "CASCADE_SEED");
}

void RunConfig::set(const std::string& key, const std::string& text) { values_[key] = parse_text(at(key), text, key); }

json RunConfig::echo(std::initializer_list<std::string_view> prefixes) const {
  json out = json::object();
  for (const auto& k : keys()) {
    bool take = k.name == "seed";
    for (auto p : prefixes) take = take || k.name.starts_with(p);
    if (take) out[k.name] = values_.at(k.name);
  }
  return out;
}

std::uint64_t RunConfig::seed() const { return at("seed").get<std::uint64_t>(); }

unsigned RunConfig::threads() const {
  const auto t = at("threads").get<std::uint64_t>();
  return t == 0 ? default_threads() : static_cast<unsigned>(t);
}

SyntheticConfig RunConfig::synthetic() const {
  SyntheticConfig c;
  c.n_nodes = at("data.n_nodes").get<std::size_t>();
  c.attachment_degree = at("data.attachment_degree").get<std::size_t>();
  c.activation_base = at("data.activation_base").get<double>();
  c.t_steps = static_cast<int>(at("data.t_steps").get<std::uint64_t>());
  c.horizon_steps.clear();
  for (const auto& h : at("data.horizons")) c.horizon_steps.push_back(static_cast<int>(h.get<std::uint64_t>()));
  c.n_cascades = at("data.n_cascades").get<std::size_t>();
  c.seed = seed();
  c.validate();
  return c;
}

double RunConfig::downsample_fraction() const {
  const double f = at("data.downsample").get<double>();
  if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("data.downsample must be in [0, 1]");
  return f;
}

std::array<double, 3> RunConfig::split_ratios() const {
  const auto& s = at("data.split");
  if (s.size() != 3) throw ConfigError("data.split needs three ratios");
  return {s[0].get<double>(), s[1].get<double>(), s[2].get<double>()};
}

Scorer RunConfig::scorer() const { return parse_scorer(at("walk.scorer").get<std::string>()); }

ModelConfig RunConfig::model(std::size_t n_node) const {
  ModelConfig m;
  m.H = at("model.H").get<std::size_t>();
  m.K = at("walk.K").get<std::size_t>();
  m.T = at("walk.T").get<std::size_t>();
  m.B = at("model.B").get<std::size_t>();
  m.n_buckets = at("model.n_buckets").get<std::size_t>();
  m.n_node = n_node;
  m.variant = parse_variant(at("model.variant").get<std::string>());
  m.fixed_k = at("model.fixed_k").get<std::size_t>();
  m.fixed_t = at("model.fixed_t").get<std::size_t>();
  m.normalize_attention = at("model.normalize_attention").get<bool>();
  const auto form = at("model.gru_form").get<std::string>();
  if (form != "standard" && form != "literal") throw ConfigError("model.gru_form must be standard or literal");
  m.gru_form = form == "standard" ? GruForm::Standard : GruForm::Literal;
  m.mlp_hidden = at("model.mlp_hidden").get<std::size_t>();
  m.seed = derive_seed(seed(), "init");
  m.validate();
  return m;
}

WalkConfig RunConfig::walk(const ModelConfig& m) const {
  auto w = walk_config_for(m, scorer(), at("walk.alpha").get<double>(), derive_seed(seed(), "walk"));
  w.validate();
  return w;
}

TrainConfig RunConfig::train() const {
  TrainConfig t;
  t.learning_rate = at("train.lr").get<double>();
  t.epochs_max = at("train.epochs").get<std::size_t>();
  t.patience = at("train.patience").get<std::size_t>();
  t.grad_clip_norm = at("train.clip").get<double>();
  t.l2_coeff = at("train.l2").get<double>();
  t.batch_cascades = at("train.batch").get<std::size_t>();
  t.optimizer = parse_optimizer(at("train.optimizer").get<std::string>());
  t.resample_paths = at("train.resample").get<bool>();
  t.horizon = static_cast<int>(at("train.horizon").get<std::uint64_t>());
  t.adam_beta1 = at("train.adam_beta1").get<double>();
  t.adam_beta2 = at("train.adam_beta2").get<double>();
  t.adam_eps = at("train.adam_eps").get<double>();
  t.seed = derive_seed(seed(), "train");
  t.validate();
  return t;
}

// ---------------------------------------------------------------------------

json generate_dataset(const RunConfig& rc, const fs::path& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfg = rc.synthetic();
  const double fraction = rc.downsample_fraction();
  const auto ratios = rc.split_ratios();
  fs::create_directories(out_dir);

  const auto g = generate_global(cfg);
  auto records = make_dataset(g, cfg, rc.threads());
  const std::size_t generated = records.size();
  auto splits = split_dataset(std::move(records), ratios, derive_seed(cfg.seed, "split"));
  std::vector<CascadeRecord>* parts[] = {&splits.train, &splits.val, &splits.test};
  for (std::size_t i = 0; i < 3; ++i) {
    *parts[i] = downsample_zero_growth(std::move(*parts[i]), fraction, derive_seed(cfg.seed, "downsample", i),
                                       cfg.primary_horizon());
  }

  {
    std::ostringstream os;
    write_global_graph(g, os);
    save_text(out_dir / "global.tsv", os.str());
  }
  save_jsonl(splits.train, out_dir / "train.jsonl");
  save_jsonl(splits.val, out_dir / "val.jsonl");
  save_jsonl(splits.test, out_dir / "test.jsonl");
  json counts = {{"generated", generated},
                 {"train", splits.train.size()},
                 {"val", splits.val.size()},
                 {"test", splits.test.size()},
                 {"global_nodes", g.n_nodes()},
                 {"global_edges", g.n_edges()}};
  json meta = {{"config", rc.echo({"data."})}, {"seed", cfg.seed}, {"counts", counts}};
  save_text(out_dir / "meta.json", meta.dump(2) + "\n");
  return {{"out", out_dir.string()}, {"counts", counts}, {"seconds", seconds_since(t0)}, {"meta", meta}};
}

json dump_walks(const RunConfig& rc, const Dataset& data, const std::string& split, const fs::path& out_file) {
  const auto& records = data.split(split);
  const auto m = rc.model(data.graph.n_nodes());
  const auto w = rc.walk(m);
  const auto t0 = std::chrono::steady_clock::now();
  const auto prepared = prepare_cascades(records, data.graph, w, 0, rc.threads());
  const double sample_seconds = seconds_since(t0);
  std::ofstream out(out_file, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + out_file.string());
  for (const auto& pc : prepared) {
    json rows = json::array();
    for (std::size_t k = 0; k < pc.paths.K(); ++k) {
      json row = json::array();
      for (NodeId v : pc.paths.row(k)) row.push_back(v == pc.paths.pad() ? std::int64_t{-1} : std::int64_t{v});
      rows.push_back(std::move(row));
    }
    out << json{{"cascade", pc.id}, {"paths", std::move(rows)}}.dump() << '\n';
  }
  return {{"split", split},
          {"n_cascades", prepared.size()},
          {"K", w.K},
          {"T", w.T},
          {"scorer", scorer_name(w.scorer)},
          {"sample_seconds", sample_seconds},
          {"out", out_file.string()}};
}

TrainingRun run_training(const RunConfig& rc, const Dataset& data, const std::optional<fs::path>& out_dir) {
  TrainingRun run;
  run.model = rc.model(data.graph.n_nodes());
  run.walk = rc.walk(run.model);
  const auto tc = rc.train();
  const unsigned threads = rc.threads();
  if (data.train.empty()) throw DomainError("training split is empty");
  if (out_dir) fs::create_directories(*out_dir);

  const auto t0 = std::chrono::steady_clock::now();
  const auto train_set = prepare_cascades(data.train, data.graph, run.walk, tc.horizon, threads);
  const auto val_set = prepare_cascades(data.val, data.graph, run.walk, tc.horizon, threads);
  const auto test_set = prepare_cascades(data.test, data.graph, run.walk, tc.horizon, threads);
  const double walk_seconds = seconds_since(t0);

  ModelParams init = ModelParams::init(run.model);
  if (const auto path = rc.at("model.embedding_init").get<std::string>(); !path.empty()) {
    import_embeddings(path, init);
  }
  run.untrained_test_mse =
      test_set.empty() ? std::numeric_limits<double>::quiet_NaN() : evaluate(init, run.model, test_set, threads).mse;

  const json config = rc.echo({"walk.", "model.", "train."});
  TrainData td;
  td.train = train_set;
  td.val = val_set;
  td.test = test_set;
  td.train_records = &data.train;
  td.graph = &data.graph;
  td.walk = run.walk;
  TrainOptions opt;
  opt.threads = threads;
  opt.initial = std::move(init);
  opt.checkpoint_extra = {{"run", config}};
  if (out_dir) opt.checkpoint_path = *out_dir / "ckpt_best.json";
  const std::string tag = std::string(variant_name(run.model.variant)) + "/" + std::string(scorer_name(run.walk.scorer));
  opt.on_epoch = [&](const EpochStats& e) {
    std::cerr << "[" << tag << "] epoch " << e.epoch << " train_mse " << e.train_mse << " val_mse " << e.val_mse << '\n';
  };
  run.result = train(run.model, td, tc, opt);

  auto nan_to_null = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  run.report = {{"meta", {{"config", config}, {"dataset", data.meta.value("config", json::object())}}},
                {"variant", variant_name(run.model.variant)},
                {"scorer", scorer_name(run.walk.scorer)},
                {"n", {{"train", train_set.size()}, {"val", val_set.size()}, {"test", test_set.size()}}},
                {"untrained_test_mse", nan_to_null(run.untrained_test_mse)},
                {"walk_seconds", walk_seconds},
                {"train", run.result.report.to_json()}};
  if (out_dir) save_text(*out_dir / "report.json", run.report.dump(2) + "\n");
  return run;
}

json evaluate_checkpoint(const fs::path& ckpt, const Dataset& data, const std::string& split, unsigned threads) {
  std::ifstream in(ckpt);
  if (!in) throw ConfigError("cannot open checkpoint " + ckpt.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  auto [cfg, params] = checkpoint_from_json(j);
  if (cfg.n_node != data.graph.n_nodes()) {
    throw ConfigError("checkpoint expects " + std::to_string(cfg.n_node) + " global nodes, dataset has " +
                      std::to_string(data.graph.n_nodes()));
  }
  RunConfig rc;
  if (j.contains("run")) rc.merge(j["run"]);
  const auto walk = rc.walk(cfg);
  const auto prepared = prepare_cascades(data.split(split), data.graph, walk, rc.train().horizon, threads);
  const auto r = evaluate(params, cfg, prepared, threads);
  return {{"split", split}, {"mse", r.mse}, {"n", r.ids.size()}, {"ckpt", ckpt.string()}};
}

std::vector<double> default_l2_grid() {
  return {1, 0.5, 0.1, 0.05, 0.01, 0.005, 1e-3, 5e-4, 1e-4, 5e-5, 1e-5, 5e-6, 1e-6, 5e-7, 1e-7, 5e-8, 1e-8};
}

json run_features_baseline(const RunConfig& rc, const Dataset& data, const BaselineOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const unsigned threads = rc.threads();
  const int horizon = rc.train().horizon;
  const auto layout = make_layout(opt.features, data.graph.n_nodes());
  auto extract = [&](const std::vector<CascadeRecord>& recs, std::vector<FeatureVector>& X, std::vector<double>& y) {
    X.resize(recs.size());
    y.resize(recs.size());
    parallel_for(recs.size(), threads, [&](std::size_t i) {
      const auto c = induce_cascade(data.graph, recs[i].adopters, recs[i].roots);
      X[i] = extract_features(c, frontier(data.graph, c), data.graph, layout, opt.features);
      y[i] = horizon > 0 ? recs[i].label_at(horizon) : recs[i].y.begin()->second;
    });
  };
  std::vector<FeatureVector> Xtr, Xva, Xte;
  std::vector<double> ytr, yva, yte;
  extract(data.train, Xtr, ytr);
  extract(data.val, Xva, yva);
  extract(data.test, Xte, yte);
  if (Xtr.empty()) throw DomainError("training split is empty");

  if (opt.dump_csv) {
    std::ofstream out(*opt.dump_csv, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + opt.dump_csv->string());
    std::vector<std::string> ids;
    std::vector<FeatureVector> rows;
    for (const auto* part : {&data.train, &data.val, &data.test}) {
      for (const auto& r : *part) ids.push_back(r.id);
    }
    rows.insert(rows.end(), Xtr.begin(), Xtr.end());
    rows.insert(rows.end(), Xva.begin(), Xva.end());
    rows.insert(rows.end(), Xte.begin(), Xte.end());
    write_features_csv(out, ids, rows);
  }

  auto score = [](const RidgeModel& m, const std::vector<FeatureVector>& X, const std::vector<double>& y) {
    std::vector<double> p(X.size());
    for (std::size_t i = 0; i < X.size(); ++i) p[i] = predict_ridge(m, X[i]);
    return mse(p, y);
  };
  const auto grid = opt.l2_grid.empty() ? default_l2_grid() : opt.l2_grid;
  json rows = json::array();
  std::optional<RidgeModel> best;
  double best_sel = std::numeric_limits<double>::infinity();
  std::string last_error;
  for (double l2 : grid) {
    try {
      auto m = fit_ridge(Xtr, ytr, l2);
      const double tr = score(m, Xtr, ytr);
      const double sel = Xva.empty() ? tr : score(m, Xva, yva);
      rows.push_back({{"l2", l2}, {"train_mse", tr}, {"val_mse", Xva.empty() ? json(nullptr) : json(sel)}});
      if (sel < best_sel) {
        best_sel = sel;
        best = std::move(m);
      }
    } catch (const NumericalError& e) {
      last_error = e.what();
      rows.push_back({{"l2", l2}, {"error", e.what()}});
    }
  }
  if (!best) throw NumericalError(last_error.empty() ? "no l2 value could be fitted" : last_error);
  json out = {{"method", "features-linear"},
              {"n_features", layout->size()},
              {"grid", rows},
              {"best_l2", best->l2},
              {"val_mse", Xva.empty() ? json(nullptr) : json(best_sel)},
              {"test_mse", Xte.empty() ? json(nullptr) : json(score(*best, Xte, yte))},
              {"n", {{"train", Xtr.size()}, {"val", Xva.size()}, {"test", Xte.size()}}},
              {"meta", {{"config", rc.echo({"train.horizon"})}, {"dataset", data.meta.value("config", json::object())}}},
              {"seconds", seconds_since(t0)}};
  return out;
}

std::vector<AblationRow> parse_ablation_rows(std::string_view spec) {
  std::vector<AblationRow> rows;
  for (const auto& item : split_list(spec)) {
    const auto colon = item.find(':');
    const auto variant = parse_variant(item.substr(0, colon));
    const auto scorer = parse_scorer(colon == std::string::npos ? "deg" : item.substr(colon + 1));
    rows.push_back({variant, scorer});
  }
  if (rows.empty()) throw ConfigError("no ablation rows given");
  return rows;
}

std::vector<AblationRow> default_ablation_rows() {
  return parse_ablation_rows("full:edge,full:deg,full:DEG,bag:deg,fixed:deg,root:deg");
}

AblationOutcome run_ablation(const RunConfig& rc, const Dataset& data, const std::vector<AblationRow>& rows,
                             const std::optional<fs::path>& out_dir) {
  AblationOutcome out;
  json table = json::array();
  std::ostringstream md;
  md << "| variant | scorer | test MSE | untrained test MSE | best epoch | epochs run |\n";
  md << "|---|---|---|---|---|---|\n";
  auto fmt = [](const json& v) {
    if (!v.is_number()) return std::string("n/a");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v.get<double>());
    return std::string(buf);
  };
  for (const auto& row : rows) {
    RunConfig sub = rc;
    sub.set("model.variant", std::string(variant_name(row.variant)));
    sub.set("walk.scorer", std::string(scorer_name(row.scorer)));
    json entry = {{"variant", variant_name(row.variant)}, {"scorer", scorer_name(row.scorer)}};
    try {
      std::optional<fs::path> dir;
      if (out_dir) dir = *out_dir / (std::string(variant_name(row.variant)) + "-" + std::string(scorer_name(row.scorer)));
      auto run = run_training(sub, data, dir);
      const auto& rep = run.result.report;
      entry["test_mse"] = rep.test_mse ? json(*rep.test_mse) : json(nullptr);
      entry["best_val_mse"] = rep.best_val_mse;
      entry["untrained_test_mse"] = run.report["untrained_test_mse"];
      entry["best_epoch"] = rep.best_epoch;
      entry["epochs_run"] = rep.history.size() - 1;
      entry["wall_seconds"] = rep.wall_seconds;
    } catch (const std::exception& e) {
      out.partial = true;
      entry["error"] = e.what();
    }
    md << "| " << entry["variant"].get<std::string>() << " | " << entry["scorer"].get<std::string>() << " | "
       << (entry.contains("error") ? "failed" : fmt(entry["test_mse"])) << " | " << fmt(entry.value("untrained_test_mse", json()))
       << " | " << (entry.contains("best_epoch") ? std::to_string(entry["best_epoch"].get<std::size_t>()) : "-") << " | "
       << (entry.contains("epochs_run") ? std::to_string(entry["epochs_run"].get<std::size_t>()) : "-") << " |\n";
    table.push_back(std::move(entry));
  }
  out.table = {{"rows", table},
               {"partial", out.partial},
               {"meta", {{"config", rc.echo({"walk.", "model.", "train."})},
                         {"dataset", data.meta.value("config", json::object())}}}};
  out.markdown = md.str();
  if (out_dir) {
    fs::create_directories(*out_dir);
    save_text(*out_dir / "ablation.json", out.table.dump(2) + "\n");
    save_text(*out_dir / "ablation.md", out.markdown);
  }
  return out;
}

}  // namespace cascadenet
