#include "cascadenet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "cascadenet/errors.hpp"
#include "cascadenet/parallel.hpp"
#include "cascadenet/rng.hpp"

namespace cascadenet {

using nlohmann::json;

Optimizer parse_optimizer(std::string_view name) {
  if (name == "adam") return Optimizer::Adam;
  if (name == "sgd") return Optimizer::Sgd;
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected adam or sgd)");
}

std::string_view optimizer_name(Optimizer o) { return o == Optimizer::Adam ? "adam" : "sgd"; }

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train.lr must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must be in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps must be > 0");
  if (patience < 1) throw ConfigError("train.patience must be >= 1");
  if (batch_cascades < 1) throw ConfigError("train.batch_cascades must be >= 1");
  if (!(grad_clip_norm >= 0.0)) throw ConfigError("train.clip must be >= 0");
  if (!(l2_coeff >= 0.0)) throw ConfigError("train.l2 must be >= 0");
  if (horizon < 0) throw ConfigError("train.horizon must be >= 0");
}

json to_json(const TrainConfig& c) {
  return {{"lr", c.learning_rate},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"epochs", c.epochs_max},
          {"patience", c.patience},
          {"clip", c.grad_clip_norm},
          {"l2", c.l2_coeff},
          {"batch", c.batch_cascades},
          {"optimizer", optimizer_name(c.optimizer)},
          {"resample", c.resample_paths},
          {"horizon", c.horizon},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.value("lr", c.learning_rate);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.epochs_max = j.value("epochs", c.epochs_max);
  c.patience = j.value("patience", c.patience);
  c.grad_clip_norm = j.value("clip", c.grad_clip_norm);
  c.l2_coeff = j.value("l2", c.l2_coeff);
  c.batch_cascades = j.value("batch", c.batch_cascades);
  c.optimizer = parse_optimizer(j.value("optimizer", std::string("adam")));
  c.resample_paths = j.value("resample", c.resample_paths);
  c.horizon = j.value("horizon", c.horizon);
  c.seed = j.value("seed", c.seed);
  return c;
}

double mse(std::span<const double> preds, std::span<const double> labels) {
  if (preds.empty() || preds.size() != labels.size()) {
    throw DomainError("mse: need equal, non-zero numbers of predictions and labels");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double d = preds[i] - labels[i];
    acc += d * d;
  }
  return acc / static_cast<double>(preds.size());
}

std::vector<PreparedCascade> prepare_cascades(const std::vector<CascadeRecord>& records, const GlobalGraph& g,
                                              const WalkConfig& walk, int horizon, unsigned threads) {
  walk.validate();
  std::vector<PreparedCascade> out(records.size());
  parallel_for(records.size(), threads, [&](std::size_t i) {
    const auto& r = records[i];
    const auto c = induce_cascade(g, r.adopters, r.roots);
    WalkConfig w = walk;
    w.seed = cascade_walk_seed(walk.seed, r.id);
    auto& p = out[i];
    p.id = r.id;
    p.size = c.n_nodes();
    if (horizon > 0) {
      p.label = r.label_at(horizon);
    } else {
      if (r.y.empty()) throw DomainError("cascade " + r.id + " has no label");
      p.label = r.y.begin()->second;
    }
    p.paths = sample_paths(c, g, w, r.id);
  });
  return out;
}

json EvalResult::to_json() const {
  return {{"mse", mse}, {"n", ids.size()}};
}

EvalResult evaluate(const ModelParams& params, const ModelConfig& cfg, std::span<const PreparedCascade> data,
                    unsigned threads) {
  if (data.empty()) throw DomainError("evaluate: empty dataset");
  EvalResult r;
  r.ids.resize(data.size());
  r.preds.resize(data.size());
  r.labels.resize(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    r.ids[i] = data[i].id;
    r.preds[i] = predict_value(params, cfg, data[i].paths, data[i].size);
    r.labels[i] = data[i].label;
  });
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (std::isfinite(r.preds[i])) continue;
    // Replay on a tape to name the first tensor that went non-finite.
    ad::Tape tape;
    const auto bound = bind(tape, params, false);
    predict(bound, cfg, data[i].paths, data[i].size);
    const auto where = tape.first_non_finite();
    throw NumericalError("non-finite prediction on cascade " + data[i].id +
                         (where ? "; first non-finite tensor: " + *where : ""));
  }
  r.residuals.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) r.residuals[i] = r.preds[i] - r.labels[i];
  r.mse = mse(r.preds, r.labels);
  return r;
}

static json epoch_json(const EpochStats& e) { return {{"epoch", e.epoch}, {"train_mse", e.train_mse}, {"val_mse", e.val_mse}}; }

json TrainReport::to_json() const {
  json h = json::array();
  for (const auto& e : history) h.push_back(epoch_json(e));
  json j = {{"history", h},          {"best_epoch", best_epoch}, {"best_val_mse", best_val_mse},
            {"steps", steps},        {"stopped_early", stopped_early},
            {"wall_seconds", wall_seconds}, {"seed", seed}};
  j["test_mse"] = test_mse ? json(*test_mse) : json(nullptr);
  return j;
}

namespace {

// Loss and gradient of one cascade's squared error on a private tape.
ModelParams cascade_gradient(const ModelParams& params, const ModelConfig& cfg, const PreparedCascade& pc,
                             double& loss) {
  ad::Tape tape;
  const auto bound = bind(tape, params, true);
  const auto pred = predict(bound, cfg, pc.paths, pc.size);
  const auto diff = ad::add_scalar(pred, -pc.label);
  const auto sq = ad::mul(diff, diff);
  loss = sq.item();
  if (!std::isfinite(loss)) {
    const auto where = tape.first_non_finite();
    throw NumericalError("non-finite loss on cascade " + pc.id + (where ? "; first non-finite tensor: " + *where : ""));
  }
  tape.backward(sq);
  ModelParams g = ModelParams::zeros_like(params);
  for (std::size_t i = 0; i < params.size(); ++i) g[i] = bound.vars[i].grad_matrix();
  return g;
}

}  // namespace

ModelParams batch_gradient(const ModelParams& params, const ModelConfig& cfg, std::span<const PreparedCascade* const> batch,
                           double l2_coeff, unsigned threads, double* loss_out) {
  if (batch.empty()) throw DomainError("empty batch");
  std::vector<ModelParams> grads(batch.size());
  std::vector<double> losses(batch.size());
  parallel_for(batch.size(), threads,
               [&](std::size_t i) { grads[i] = cascade_gradient(params, cfg, *batch[i], losses[i]); });
  // Reduction in batch order keeps the sum independent of scheduling.
  ModelParams total = std::move(grads[0]);
  double loss = losses[0];
  for (std::size_t i = 1; i < batch.size(); ++i) {
    loss += losses[i];
    for (std::size_t p = 0; p < total.size(); ++p) {
      auto& dst = total[p].data;
      const auto& src = grads[i][p].data;
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  loss *= inv;
  for (std::size_t p = 0; p < total.size(); ++p) {
    auto& dst = total[p].data;
    const auto& theta = params[p].data;
    for (std::size_t k = 0; k < dst.size(); ++k) {
      dst[k] = dst[k] * inv + 2.0 * l2_coeff * theta[k];
    }
    if (l2_coeff > 0.0) {
      for (double t : theta) loss += l2_coeff * t * t;
    }
  }
  if (loss_out) *loss_out = loss;
  return total;
}

TrainResult train(const ModelConfig& cfg, const TrainData& data, const TrainConfig& tc, const TrainOptions& opt) {
  cfg.validate();
  tc.validate();
  if (data.train.empty()) throw DomainError("train: empty training split");
  if (tc.resample_paths && (!data.train_records || !data.graph)) {
    throw ConfigError("train: resampling paths needs the training records and graph");
  }
  const auto start = std::chrono::steady_clock::now();

  ModelParams params = opt.initial ? *opt.initial : ModelParams::init(cfg);
  ModelParams m1 = ModelParams::zeros_like(params);
  ModelParams m2 = ModelParams::zeros_like(params);

  std::vector<PreparedCascade> resampled;
  std::span<const PreparedCascade> train_set = data.train;

  auto score = [&](const ModelParams& p) {
    EpochStats e;
    e.train_mse = evaluate(p, cfg, train_set, opt.threads).mse;
    e.val_mse = data.val.empty() ? e.train_mse : evaluate(p, cfg, data.val, opt.threads).mse;
    return e;
  };

  TrainResult result;
  auto& rep = result.report;
  rep.seed = tc.seed;
  rep.history.push_back(score(params));
  if (opt.on_epoch) opt.on_epoch(rep.history.back());
  rep.best_val_mse = rep.history.back().val_mse;
  ModelParams best = params;
  if (opt.checkpoint_path) save_checkpoint(*opt.checkpoint_path, cfg, best, opt.checkpoint_extra);

  std::size_t since_best = 0;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= tc.epochs_max; ++epoch) {
    if (tc.resample_paths) {
      WalkConfig w = data.walk;
      w.seed = derive_seed(data.walk.seed, "epoch", epoch);
      resampled = prepare_cascades(*data.train_records, *data.graph, w, tc.horizon, opt.threads);
      train_set = resampled;
    }
    // Visit order depends only on ids and the seed, not on the input order.
    std::vector<const PreparedCascade*> order;
    order.reserve(train_set.size());
    for (const auto& pc : train_set) order.push_back(&pc);
    std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->id < b->id; });
    CounterRng rng(derive_seed(tc.seed, "shuffle", epoch));
    shuffle(order.begin(), order.end(), rng);

    for (std::size_t b = 0; b < order.size(); b += tc.batch_cascades) {
      const std::size_t e = std::min(order.size(), b + tc.batch_cascades);
      std::span<const PreparedCascade* const> batch(order.data() + b, e - b);
      auto grad = batch_gradient(params, cfg, batch, tc.l2_coeff, opt.threads);

      double norm2 = 0.0;
      for (const auto& g : grad.arrays()) {
        for (double v : g.data) norm2 += v * v;
      }
      if (!std::isfinite(norm2)) {
        for (std::size_t p = 0; p < grad.size(); ++p) {
          for (double v : grad[p].data) {
            if (!std::isfinite(v)) throw NumericalError("non-finite gradient in parameter " + grad.name(p));
          }
        }
      }
      double clip = 1.0;
      if (tc.grad_clip_norm > 0.0 && norm2 > tc.grad_clip_norm * tc.grad_clip_norm) {
        clip = tc.grad_clip_norm / std::sqrt(norm2);
      }
      ++step;
      const double bc1 = 1.0 - std::pow(tc.adam_beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(tc.adam_beta2, static_cast<double>(step));
      for (std::size_t p = 0; p < params.size(); ++p) {
        auto& theta = params[p].data;
        const auto& g = grad[p].data;
        if (tc.optimizer == Optimizer::Sgd) {
          for (std::size_t k = 0; k < theta.size(); ++k) theta[k] -= tc.learning_rate * (g[k] * clip);
          continue;
        }
        auto& mm = m1[p].data;
        auto& vv = m2[p].data;
        for (std::size_t k = 0; k < theta.size(); ++k) {
          const double gk = g[k] * clip;
          mm[k] = tc.adam_beta1 * mm[k] + (1.0 - tc.adam_beta1) * gk;
          vv[k] = tc.adam_beta2 * vv[k] + (1.0 - tc.adam_beta2) * gk * gk;
          theta[k] -= tc.learning_rate * (mm[k] / bc1) / (std::sqrt(vv[k] / bc2) + tc.adam_eps);
        }
      }
      if (!params.all_finite()) {
        for (std::size_t p = 0; p < params.size(); ++p) {
          for (double v : params[p].data) {
            if (!std::isfinite(v)) throw NumericalError("parameter " + params.name(p) + " became non-finite");
          }
        }
      }
    }

    EpochStats st = score(params);
    st.epoch = epoch;
    rep.history.push_back(st);
    if (opt.on_epoch) opt.on_epoch(st);
    if (st.val_mse < rep.best_val_mse) {
      rep.best_val_mse = st.val_mse;
      rep.best_epoch = epoch;
      best = params;
      since_best = 0;
      if (opt.checkpoint_path) save_checkpoint(*opt.checkpoint_path, cfg, best, opt.checkpoint_extra);
    } else if (++since_best >= tc.patience) {
      rep.stopped_early = epoch < tc.epochs_max;
      break;
    }
  }
  rep.steps = step;
  if (!data.test.empty()) rep.test_mse = evaluate(best, cfg, data.test, opt.threads).mse;
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.params = std::move(best);
  return result;
}

json ErrorAnalysis::to_json() const {
  auto stats = [](const GraphStats& s) {
    return json{{"count", s.count},
                {"n_nodes", s.n_nodes},
                {"n_edges", s.n_edges},
                {"mean_out_degree", s.mean_out_degree},
                {"edge_density", s.edge_density}};
  };
  return {{"a_better", stats(a_better)}, {"b_better", stats(b_better)}, {"overall", stats(overall)}};
}

ErrorAnalysis error_analysis(const EvalResult& a, const EvalResult& b, const std::vector<CascadeRecord>& records,
                             const GlobalGraph& g, std::size_t top_n) {
  if (a.ids != b.ids || a.residuals.size() != a.ids.size() || b.residuals.size() != b.ids.size()) {
    throw DomainError("error_analysis: residuals are not aligned on the same cascades");
  }
  std::unordered_map<std::string_view, const CascadeRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.id, &r);

  struct Shape {
    double n, m;
  };
  std::vector<Shape> shapes(a.ids.size());
  for (std::size_t i = 0; i < a.ids.size(); ++i) {
    auto it = by_id.find(a.ids[i]);
    if (it == by_id.end()) throw DomainError("error_analysis: unknown cascade " + a.ids[i]);
    const auto c = induce_cascade(g, it->second->adopters, it->second->roots);
    shapes[i] = {static_cast<double>(c.n_nodes()), static_cast<double>(c.n_edges())};
  }
  auto summarize = [&](const std::vector<std::size_t>& idx) {
    GraphStats s;
    s.count = idx.size();
    if (idx.empty()) return s;
    for (std::size_t i : idx) {
      const auto [n, m] = shapes[i];
      s.n_nodes += n;
      s.n_edges += m;
      s.mean_out_degree += m / n;
      s.edge_density += n >= 2 ? m / (n * (n - 1)) : 0.0;
    }
    const auto k = static_cast<double>(idx.size());
    s.n_nodes /= k;
    s.n_edges /= k;
    s.mean_out_degree /= k;
    s.edge_density /= k;
    return s;
  };
  // margin > 0: A has the lower squared error.
  std::vector<std::pair<double, std::size_t>> a_wins, b_wins;
  for (std::size_t i = 0; i < a.ids.size(); ++i) {
    const double margin = b.residuals[i] * b.residuals[i] - a.residuals[i] * a.residuals[i];
    if (margin > 0) a_wins.emplace_back(margin, i);
    if (margin < 0) b_wins.emplace_back(-margin, i);
  }
  auto top = [&](std::vector<std::pair<double, std::size_t>>& v) {
    std::stable_sort(v.begin(), v.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < std::min(top_n, v.size()); ++i) idx.push_back(v[i].second);
    return idx;
  };
  ErrorAnalysis out;
  out.a_better = summarize(top(a_wins));
  out.b_better = summarize(top(b_wins));
  std::vector<std::size_t> all(a.ids.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  out.overall = summarize(all);
  return out;
}

}  // namespace cascadenet
