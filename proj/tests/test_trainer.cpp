#include <algorithm>
#include <cmath>

#include "doctest.h"

#include "cascadenet/errors.hpp"
#include "cascadenet/rng.hpp"
#include "cascadenet/trainer.hpp"

using namespace cascadenet;

namespace {

struct Fixture {
  SyntheticConfig syn;
  GlobalGraph g;
  std::vector<CascadeRecord> records;
  ModelConfig cfg;
  WalkConfig walk;
  std::vector<PreparedCascade> prepared;

  explicit Fixture(std::size_t n_cascades = 24, Variant v = Variant::Full) {
    syn.n_nodes = 120;
    syn.n_cascades = n_cascades;
    syn.activation_base = 0.2;
    syn.seed = 3;
    g = generate_global(syn);
    records = make_dataset(g, syn);
    cfg.H = 4;
    cfg.K = 8;
    cfg.T = 4;
    cfg.B = 2;
    cfg.n_buckets = 6;
    cfg.n_node = g.n_nodes();
    cfg.variant = v;
    cfg.seed = 11;
    walk = walk_config_for(cfg, Scorer::LocalDegree, 0.01, 99);
    prepared = prepare_cascades(records, g, walk, 0, 1);
  }
};

TrainConfig quick(std::size_t epochs = 3) {
  TrainConfig tc;
  tc.epochs_max = epochs;
  tc.batch_cascades = 4;
  tc.seed = 8;
  return tc;
}

}  // namespace

TEST_CASE("mse examples and errors") {
  std::vector<double> p{1, 2, 3}, y{1, 2, 5};
  CHECK(mse(p, y) == doctest::Approx(4.0 / 3.0));
  CHECK(mse(std::vector<double>{2}, std::vector<double>{2}) == 0.0);
  CHECK_THROWS_AS(mse(std::vector<double>{}, std::vector<double>{}), DomainError);
  CHECK_THROWS_AS(mse(p, std::vector<double>{1}), DomainError);
}

TEST_CASE("train config validation and json round trip") {
  TrainConfig tc;
  tc.learning_rate = -1;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.batch_cascades = 0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.optimizer = Optimizer::Sgd;
  tc.epochs_max = 7;
  tc.l2_coeff = 0.25;
  auto back = train_config_from_json(to_json(tc));
  CHECK(back.optimizer == Optimizer::Sgd);
  CHECK(back.epochs_max == 7);
  CHECK(back.l2_coeff == 0.25);
  CHECK_THROWS_AS(parse_optimizer("rmsprop"), ConfigError);
}

TEST_CASE("zero learning rate leaves parameters bitwise unchanged") {
  Fixture fx;
  auto tc = quick(2);
  tc.learning_rate = 0.0;
  TrainData data{fx.prepared, {}, {}};
  auto r = train(fx.cfg, data, tc);
  CHECK(r.params == ModelParams::init(fx.cfg));
  CHECK(r.report.history.size() >= 2);
  CHECK(r.report.history[1].train_mse == r.report.history[0].train_mse);
}

TEST_CASE("history starts with the untrained model and best is the minimum") {
  Fixture fx(30);
  std::span<const PreparedCascade> all(fx.prepared);
  TrainData data{all.subspan(0, 20), all.subspan(20, 5), all.subspan(25)};
  auto tc = quick(4);
  std::vector<EpochStats> seen;
  TrainOptions opt;
  opt.on_epoch = [&](const EpochStats& e) { seen.push_back(e); };
  auto r = train(fx.cfg, data, tc, opt);
  const auto& h = r.report.history;
  CHECK(h.size() == seen.size());
  CHECK(h[0].epoch == 0);
  CHECK(h[0].val_mse == evaluate(ModelParams::init(fx.cfg), fx.cfg, data.val, 1).mse);
  for (const auto& e : h) CHECK(r.report.best_val_mse <= e.val_mse);
  CHECK(h[r.report.best_epoch].val_mse == r.report.best_val_mse);
  // Returned parameters are the best ones.
  CHECK(evaluate(r.params, fx.cfg, data.val, 1).mse == r.report.best_val_mse);
  REQUIRE(r.report.test_mse);
  CHECK(*r.report.test_mse == evaluate(r.params, fx.cfg, data.test, 1).mse);
}

TEST_CASE("training memorizes a single cascade") {
  Fixture fx(4);
  std::vector<PreparedCascade> one{fx.prepared[0]};
  one[0].label = 2.5;
  TrainConfig tc;
  tc.epochs_max = 200;
  tc.patience = 200;
  tc.batch_cascades = 1;
  tc.learning_rate = 0.02;
  auto r = train(fx.cfg, TrainData{one, {}, {}}, tc);
  CHECK(r.report.best_val_mse < 1e-3);
}

TEST_CASE("evaluate agrees with the prediction and the training loss") {
  Fixture fx;
  auto params = ModelParams::init(fx.cfg);
  auto ev = evaluate(params, fx.cfg, fx.prepared, 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < fx.prepared.size(); ++i) {
    const auto& pc = fx.prepared[i];
    CHECK(ev.ids[i] == pc.id);
    CHECK(ev.preds[i] == predict_value(params, fx.cfg, pc.paths, pc.size));
    CHECK(ev.residuals[i] == ev.preds[i] - ev.labels[i]);
    sum += ev.residuals[i] * ev.residuals[i];
  }
  CHECK(std::abs(ev.mse - sum / fx.prepared.size()) < 1e-12);
  std::vector<const PreparedCascade*> batch;
  for (const auto& pc : fx.prepared) batch.push_back(&pc);
  double loss = 0;
  batch_gradient(params, fx.cfg, batch, 0.0, 1, &loss);
  CHECK(std::abs(loss - ev.mse) < 1e-12);

  auto doubled = fx.prepared;
  doubled.insert(doubled.end(), fx.prepared.begin(), fx.prepared.end());
  CHECK(std::abs(evaluate(params, fx.cfg, doubled, 1).mse - ev.mse) < 1e-12);
  CHECK_THROWS_AS(evaluate(params, fx.cfg, std::span<const PreparedCascade>{}, 1), DomainError);
}

TEST_CASE("l2 term adds 2 l2 theta to the gradient") {
  Fixture fx(6);
  auto params = ModelParams::init(fx.cfg);
  std::vector<const PreparedCascade*> batch{&fx.prepared[0], &fx.prepared[1]};
  auto g0 = batch_gradient(params, fx.cfg, batch, 0.0, 1);
  auto g1 = batch_gradient(params, fx.cfg, batch, 0.3, 1);
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t k = 0; k < params[p].data.size(); ++k)
      CHECK(std::abs(g1[p].data[k] - g0[p].data[k] - 0.6 * params[p].data[k]) < 1e-12);
}

TEST_CASE("results do not depend on thread count or file order") {
  Fixture fx(20);
  std::span<const PreparedCascade> all(fx.prepared);
  TrainData data{all.subspan(0, 14), all.subspan(14), {}};
  auto tc = quick(2);
  TrainOptions one, four;
  four.threads = 4;
  auto a = train(fx.cfg, data, tc, one);
  auto b = train(fx.cfg, data, tc, four);
  CHECK(a.params == b.params);
  CHECK(a.report.best_val_mse == b.report.best_val_mse);

  auto records = fx.records;
  std::reverse(records.begin(), records.end());
  auto rev = prepare_cascades(records, fx.g, fx.walk, 0, 3);
  std::vector<PreparedCascade> rev_train(rev.end() - 14, rev.end());
  std::reverse(rev_train.begin(), rev_train.end());
  for (std::size_t i = 0; i < rev_train.size(); ++i) CHECK(rev_train[i].paths == fx.prepared[i].paths);
  std::vector<PreparedCascade> shuffled(rev_train.rbegin(), rev_train.rend());
  std::rotate(shuffled.begin(), shuffled.begin() + 5, shuffled.end());
  auto c = train(fx.cfg, TrainData{shuffled, data.val, {}}, tc);
  CHECK(c.params == a.params);
}

TEST_CASE("first Adam step moves each parameter by at most the learning rate") {
  Fixture fx(8);
  auto tc = quick(1);
  tc.batch_cascades = 100;
  tc.learning_rate = 0.05;
  tc.patience = 5;
  auto init = ModelParams::init(fx.cfg);
  TrainOptions opt;
  opt.initial = init;
  // One batch, one step; the bias-corrected Adam ratio is at most 1 in magnitude.
  std::span<const PreparedCascade> all(fx.prepared);
  TrainData data{all, {}, {}};
  auto r = train(fx.cfg, data, tc, opt);
  CHECK(r.report.steps == 1);
  for (std::size_t p = 0; p < init.size(); ++p)
    for (std::size_t k = 0; k < init[p].data.size(); ++k)
      CHECK(std::abs(r.params[p].data[k] - init[p].data[k]) <= tc.learning_rate * (1 + 1e-12));
}

TEST_CASE("sgd step follows the clipped gradient") {
  Fixture fx(6);
  TrainConfig tc = quick(1);
  tc.optimizer = Optimizer::Sgd;
  tc.batch_cascades = 100;
  tc.learning_rate = 1e-3;
  tc.grad_clip_norm = 0.0;
  auto init = ModelParams::init(fx.cfg);
  std::vector<const PreparedCascade*> batch;
  for (const auto& pc : fx.prepared) batch.push_back(&pc);
  std::sort(batch.begin(), batch.end(), [](auto* a, auto* b) { return a->id < b->id; });
  CounterRng rng(derive_seed(tc.seed, "shuffle", 1));
  shuffle(batch.begin(), batch.end(), rng);
  auto g = batch_gradient(init, fx.cfg, batch, 0.0, 1);
  auto manual = init;
  for (std::size_t p = 0; p < init.size(); ++p)
    for (std::size_t k = 0; k < init[p].data.size(); ++k) manual[p].data[k] -= tc.learning_rate * g[p].data[k];
  std::span<const PreparedCascade> all(fx.prepared);
  auto r = train(fx.cfg, TrainData{all, {}, {}}, tc);
  if (r.report.best_epoch == 1) {
    CHECK(r.params == manual);
  } else {
    CHECK(evaluate(manual, fx.cfg, all, 1).mse >= r.report.best_val_mse);
  }
}

TEST_CASE("non-finite values raise NumericalError") {
  Fixture fx(4);
  auto init = ModelParams::init(fx.cfg);
  init.at("mlp.weight").data[0] = std::nan("");
  TrainOptions opt;
  opt.initial = init;
  std::span<const PreparedCascade> all(fx.prepared);
  CHECK_THROWS_AS(train(fx.cfg, TrainData{all, {}, {}}, quick(1), opt), NumericalError);
}

TEST_CASE("error analysis splits cascades by squared-error margin") {
  GlobalGraph g(6, {{0, 1, 1}, {1, 2, 1}, {2, 0, 1}, {3, 4, 1}});
  std::vector<CascadeRecord> recs(5);
  const std::vector<std::vector<NodeId>> adopters{{0, 1, 2}, {3, 4}, {0, 1}, {5}, {1, 2}};
  for (std::size_t i = 0; i < 5; ++i) {
    recs[i].id = "c" + std::to_string(i);
    recs[i].adopters = adopters[i];
    recs[i].roots = {adopters[i][0]};
  }
  EvalResult a, b;
  for (std::size_t i = 0; i < 5; ++i) {
    a.ids.push_back(recs[i].id);
    b.ids.push_back(recs[i].id);
  }
  a.residuals = {0.1, 2.0, 0.5, 1.0, 0.0};
  b.residuals = {1.0, 0.1, 0.5, 3.0, 0.2};
  auto ea = error_analysis(a, b, recs, g, 2);
  // Margins b^2 - a^2: 0.99, -3.99, 0, 8, 0.04. A wins on c3, c0 (top 2).
  CHECK(ea.a_better.count == 2);
  CHECK(ea.a_better.n_nodes == doctest::Approx((1.0 + 3.0) / 2));
  CHECK(ea.a_better.n_edges == doctest::Approx(1.5));
  CHECK(ea.b_better.count == 1);
  CHECK(ea.b_better.n_nodes == 2.0);
  CHECK(ea.b_better.edge_density == doctest::Approx(0.5));
  CHECK(ea.overall.count == 5);
  CHECK(ea.overall.n_nodes == doctest::Approx(2.0));

  auto same = error_analysis(a, a, recs, g, 100);
  CHECK(same.a_better.count == 0);
  CHECK(same.b_better.count == 0);
  CHECK(same.overall.count == 5);

  auto clamp = error_analysis(a, b, recs, g, 100);
  CHECK(clamp.a_better.count == 3);

  EvalResult bad = b;
  std::swap(bad.ids[0], bad.ids[1]);
  CHECK_THROWS_AS(error_analysis(a, bad, recs, g), DomainError);
}
