#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "oracles.hpp"

#include "cascadenet/errors.hpp"
#include "cascadenet/model.hpp"

using namespace cascadenet;
using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

ModelConfig tiny(std::size_t H = 4, std::size_t K = 6, std::size_t T = 5, std::size_t B = 2) {
  ModelConfig c;
  c.H = H;
  c.K = K;
  c.T = T;
  c.B = B;
  c.n_buckets = 4;
  c.n_node = 20;
  c.seed = 5;
  return c;
}

PathSet random_paths(std::size_t K, std::size_t T, NodeId pad, CounterRng& rng) {
  PathSet p(K, T, pad);
  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t len = 1 + rng.below(T);
    for (std::size_t i = 0; i < len; ++i) p.at(k, i) = static_cast<NodeId>(rng.below(pad));
  }
  return p;
}

// Random values in every array, including zero-initialized ones.
ModelParams randomized(const ModelConfig& cfg, std::uint64_t seed, double scale = 0.5) {
  auto p = ModelParams::init(cfg);
  CounterRng rng(seed);
  for (auto& m : p.arrays())
    for (double& v : m.data) v = rng.uniform(-scale, scale);
  return p;
}

oracle::ScalarGru scalar_gru(const ModelParams& p, const std::string& dir, std::size_t H) {
  auto g = [&](const char* n) { return p.at(dir + "." + n).data; };
  return {H, g("W_u"), g("W_r"), g("W_h"), g("U_u"), g("U_r"), g("U_h"), g("b_u"), g("b_r"), g("b_h")};
}

}  // namespace

TEST_CASE("config validation") {
  auto c = tiny();
  c.K = 7;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.K = 6;
  c.B = 8;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.B = 2;
  c.n_buckets = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("size buckets") {
  CHECK(size_bucket(0, 12) == 0);
  CHECK(size_bucket(1, 12) == 1);
  CHECK(size_bucket(2, 12) == 1);
  CHECK(size_bucket(3, 12) == 2);
  CHECK(size_bucket(7, 12) == 3);
  CHECK(size_bucket(4095, 12) == 11);
  CHECK(size_bucket(1 << 20, 12) == 11);
  std::size_t prev = 0;
  for (std::size_t s = 0; s < 5000; ++s) {
    const auto b = size_bucket(s, 12);
    CHECK(b >= prev);
    CHECK(b <= 11);
    CHECK(b == std::min<std::size_t>(static_cast<std::size_t>(std::floor(std::log2(s + 1.0))), 11));
    prev = b;
  }
}

TEST_CASE("embedding lookup") {
  auto cfg = tiny();
  auto params = randomized(cfg, 1);
  Tape t;
  auto b = bind(t, params, false);
  std::vector<NodeId> ids{3, 20, 0};
  auto x = embed(b, ids).to_matrix();
  const auto& A = params.at("A");
  for (std::size_t k = 0; k < ids.size(); ++k)
    for (std::size_t h = 0; h < cfg.H; ++h) CHECK(x(k, h) == A(h, ids[k]));
  std::vector<NodeId> pads(5, 20);
  auto xp = embed(b, pads).to_matrix();
  for (std::size_t k = 0; k < 5; ++k)
    for (std::size_t h = 0; h < cfg.H; ++h) CHECK(xp(k, h) == A(h, 20));
}

TEST_CASE("GRU cell against a scalar implementation") {
  auto cfg = tiny();
  SUBCASE("zero parameters") {
    auto params = ModelParams::zeros_like(ModelParams::init(cfg));
    Tape t;
    auto b = bind(t, params, false);
    auto x = t.constant(Matrix(1, 4, {1, -2, 3, 0.5}));
    auto h = t.constant(Matrix(1, 4, {0.2, -0.4, 1.0, 3.0}));
    auto out = gru_cell(x, h, b.fwd).value();
    for (std::size_t j = 0; j < 4; ++j) CHECK(out[j] == 0.5 * h.value()[j]);
    auto from_zero = gru_cell(x, t.constant(Matrix(1, 4)), b.fwd).value();
    for (double v : from_zero) CHECK(v == 0.0);
  }
  SUBCASE("random parameters") {
    auto params = randomized(cfg, 2);
    auto ref = scalar_gru(params, "fwd", 4);
    CounterRng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      auto xm = oracle::random_matrix(1, 4, rng);
      auto hm = oracle::random_matrix(1, 4, rng);
      Tape t;
      auto b = bind(t, params, false);
      auto got = gru_cell(t.constant(xm), t.constant(hm), b.fwd).value();
      auto want = ref.step(xm.data, hm.data);
      for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(got[j] - want[j]) < 1e-14);
    }
  }
}

TEST_CASE("bidirectional encoding") {
  auto cfg = tiny(4, 2, 5, 1);
  auto params = randomized(cfg, 4);
  // Share parameters between directions.
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params.name(i).starts_with("bwd.")) params[i] = params.at("fwd." + params.name(i).substr(4));
  }
  PathSet p(2, 5, 20);
  const NodeId pal[] = {1, 4, 7, 4, 1};
  for (std::size_t i = 0; i < 5; ++i) p.at(0, i) = pal[i], p.at(1, i) = pal[i];
  Tape t;
  auto b = bind(t, params, false);
  auto enc = encode_paths(b, cfg, p);
  for (std::size_t i = 0; i < 5; ++i) {
    auto fi = enc[i].to_matrix();
    auto bj = enc[4 - i].to_matrix();
    for (std::size_t h = 0; h < 4; ++h) CHECK(std::abs(fi(0, h) - bj(0, 4 + h)) < 1e-15);
  }

  SUBCASE("one position") {
    auto c1 = tiny(4, 1, 1, 1);
    auto p1 = randomized(c1, 9);
    PathSet q(1, 1, 20);
    q.at(0, 0) = 3;
    Tape u;
    auto bb = bind(u, p1, false);
    auto e = encode_paths(bb, c1, q)[0].to_matrix();
    std::vector<double> x(4), zero(4, 0.0);
    for (std::size_t h = 0; h < 4; ++h) x[h] = p1.at("A")(h, 3);
    auto f = scalar_gru(p1, "fwd", 4).step(x, zero);
    auto r = scalar_gru(p1, "bwd", 4).step(x, zero);
    for (std::size_t h = 0; h < 4; ++h) {
      CHECK(std::abs(e(0, h) - f[h]) < 1e-14);
      CHECK(std::abs(e(0, 4 + h) - r[h]) < 1e-14);
    }
  }

  SUBCASE("changing the last node only touches the backward half of position 0") {
    auto c2 = tiny(4, 2, 5, 1);
    auto p2 = randomized(c2, 10);
    PathSet a(2, 5, 20);
    for (std::size_t i = 0; i < 5; ++i) a.at(0, i) = a.at(1, i) = static_cast<NodeId>(i + 2);
    PathSet bpath = a;
    bpath.at(0, 4) = 11;
    Tape u;
    auto bb = bind(u, p2, false);
    auto ea = encode_paths(bb, c2, a)[0].to_matrix();
    auto eb = encode_paths(bb, c2, bpath)[0].to_matrix();
    for (std::size_t h = 0; h < 4; ++h) CHECK(ea(0, h) == eb(0, h));
    bool moved = false;
    for (std::size_t h = 4; h < 8; ++h) moved = moved || ea(0, h) != eb(0, h);
    CHECK(moved);
  }
}

TEST_CASE("literal GRU form starts from a zero candidate") {
  auto cfg = tiny(4, 2, 3, 1);
  cfg.gru_form = GruForm::Literal;
  auto params = randomized(cfg, 12);
  PathSet p(2, 3, 20);
  for (std::size_t i = 0; i < 3; ++i) p.at(0, i) = p.at(1, i) = static_cast<NodeId>(i);
  Tape t;
  auto b = bind(t, params, false);
  auto enc = encode_paths(b, cfg, p);
  // h_1 = u * 0 + (1 - u) * 0 in the forward direction.
  for (std::size_t h = 0; h < 4; ++h) CHECK(enc[0].to_matrix()(0, h) == 0.0);
  for (std::size_t h = 4; h < 8; ++h) CHECK(enc[2].to_matrix()(0, h) == 0.0);
  cfg.gru_form = GruForm::Standard;
  auto std_enc = encode_paths(b, cfg, p);
  CHECK(std_enc[0].to_matrix()(0, 0) != 0.0);
}

TEST_CASE("attention weights") {
  Tape t;
  auto a = t.constant(Matrix(1, 1, 0.5));
  auto lambda = t.constant(Matrix(1, 4, 0.25));
  auto w = attention_weights(a, lambda, 10, 5).to_matrix();
  double total = 0.0;
  for (std::size_t k = 0; k < 10; ++k)
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(w(k, i) == (k < 5 ? 0.5 / 4 : 0.25 / 4));
      total += w(k, i);
    }
  CHECK(std::abs(total - 3.75) < 1e-12);
  CHECK(attention_mass(0.5, 10, 5) == 3.75);
  CHECK_THROWS_AS(attention_weights(a, lambda, 9, 5), ConfigError);
}

TEST_CASE("pooling equals a brute-force double loop") {
  CounterRng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t B = 1 + rng.below(4);
    const std::size_t K = B * (1 + rng.below(5));
    const std::size_t T = 1 + rng.below(6);
    auto cfg = tiny(3, K, T, B);
    auto params = randomized(cfg, 100 + trial, 2.0);
    Tape t;
    auto b = bind(t, params, false);
    std::vector<Var> enc;
    std::vector<std::vector<std::vector<double>>> raw(K, std::vector<std::vector<double>>(T));
    for (std::size_t i = 0; i < T; ++i) {
      auto m = oracle::random_matrix(K, 6, rng);
      for (std::size_t k = 0; k < K; ++k) raw[k][i].assign(m.data.begin() + k * 6, m.data.begin() + (k + 1) * 6);
      enc.push_back(t.constant(m));
    }
    const std::size_t size = 1 + rng.below(30);
    auto h = attention_assemble(b, cfg, enc, size).value();
    const double a = oracle::sigmoid(params.at("geo_logits").data[size_bucket(size, cfg.n_buckets)]);
    const auto& lg = params.at("lambda_logits").data;
    double mx = *std::max_element(lg.begin(), lg.end()), den = 0.0;
    std::vector<double> lambda(T);
    for (std::size_t i = 0; i < T; ++i) den += lambda[i] = std::exp(lg[i] - mx);
    for (double& l : lambda) l /= den;
    auto want = oracle::pooled(raw, a, lambda, B);
    for (std::size_t d = 0; d < 6; ++d) CHECK(std::abs(h[d] - want[d]) < 1e-12);

    // Permuting rows within a mini-batch leaves the result unchanged.
    std::vector<Var> perm;
    for (std::size_t i = 0; i < T; ++i) {
      auto m = enc[i].to_matrix();
      for (std::size_t k0 = 0; k0 < K; k0 += B)
        std::reverse(reinterpret_cast<std::array<double, 6>*>(m.data.data()) + k0,
                     reinterpret_cast<std::array<double, 6>*>(m.data.data()) + k0 + B);
      perm.push_back(t.constant(m));
    }
    auto hp = attention_assemble(b, cfg, perm, size).value();
    for (std::size_t d = 0; d < 6; ++d) CHECK(std::abs(h[d] - hp[d]) < 1e-12);
  }
}

TEST_CASE("normalized attention sums to one") {
  Tape t;
  auto cfg = tiny(3, 6, 4, 2);
  cfg.normalize_attention = true;
  auto params = randomized(cfg, 3);
  auto b = bind(t, params, false);
  std::vector<Var> enc;
  for (std::size_t i = 0; i < 4; ++i) enc.push_back(t.constant(Matrix(6, 6, 1.0)));
  auto h = attention_assemble(b, cfg, enc, 5).value();
  for (double v : h) CHECK(std::abs(v - 1.0) < 1e-12);
}

TEST_CASE("geometric weight is monotone in its logit") {
  double prev = -1.0;
  for (double logit = -6.0; logit <= 6.0; logit += 0.5) {
    Tape t;
    auto a = ad::sigmoid(t.constant(Matrix(1, 1, logit))).item();
    CHECK(a > 0.0);
    CHECK(a < 1.0);
    CHECK(a >= prev);
    prev = a;
  }
}

TEST_CASE("prediction head and variant checks") {
  auto cfg = tiny();
  auto params = randomized(cfg, 6);
  std::fill(params.at("mlp.weight").data.begin(), params.at("mlp.weight").data.end(), 0.0);
  params.at("mlp.bias").data[0] = 0.75;
  CounterRng rng(1);
  for (int i = 0; i < 3; ++i) CHECK(predict_value(params, cfg, random_paths(6, 5, 20, rng), 4 + i) == 0.75);
  CHECK_THROWS_AS(predict_value(params, cfg, random_paths(6, 4, 20, rng), 4), ConfigError);
  PathSet bad(6, 5, 20);
  bad.at(0, 0) = 21;
  CHECK_THROWS_AS(predict_value(params, cfg, bad, 4), std::out_of_range);

  auto hidden = cfg;
  hidden.mlp_hidden = 3;
  auto hp = ModelParams::init(hidden);
  CHECK(hp.at("mlp.hidden_w").rows == 3);
  CHECK(std::isfinite(predict_value(hp, hidden, random_paths(6, 5, 20, rng), 5)));
}

TEST_CASE("uniform pooling is invariant to duplicating paths") {
  auto cfg = tiny(4, 6, 5, 2);
  cfg.variant = Variant::Fixed;
  auto params = randomized(cfg, 7);
  CounterRng rng(2);
  auto p = random_paths(6, 5, 20, rng);
  auto cfg2 = cfg;
  cfg2.K = 12;
  PathSet twice(12, 5, 20);
  for (std::size_t k = 0; k < 6; ++k)
    for (std::size_t i = 0; i < 5; ++i) twice.at(2 * k, i) = twice.at(2 * k + 1, i) = p.at(k, i);
  CHECK(std::abs(predict_value(params, cfg, p, 6) - predict_value(params, cfg2, twice, 6)) < 1e-12);
}

TEST_CASE("embedding gradient touches only visited columns") {
  auto cfg = tiny();
  auto params = randomized(cfg, 8);
  PathSet p(6, 5, 20);
  for (std::size_t k = 0; k < 6; ++k) {
    p.at(k, 0) = 2;
    p.at(k, 1) = 5;
  }
  Tape t;
  auto b = bind(t, params, true);
  t.backward(predict(b, cfg, p, 2));
  auto g = b.A.grad_matrix();
  for (std::size_t col = 0; col <= 20; ++col) {
    double mag = 0.0;
    for (std::size_t h = 0; h < cfg.H; ++h) mag += std::abs(g(h, col));
    if (col == 2 || col == 5 || col == 20)
      CHECK(mag > 0.0);
    else
      CHECK(mag == 0.0);
  }
}

TEST_CASE("end-to-end gradient matches finite differences") {
  ModelConfig cfg = tiny(8, 6, 5, 2);
  cfg.n_node = 20;
  auto params = randomized(cfg, 9, 0.3);
  CounterRng rng(4);
  auto paths = random_paths(6, 5, 20, rng);
  const double label = 1.7;
  std::vector<Matrix> inputs(params.arrays().begin(), params.arrays().end());
  auto f = [&](Tape& t, std::span<const Var> vars) {
    (void)t;
    auto b = bind_vars(params, std::vector<Var>(vars.begin(), vars.end()));
    auto d = ad::add_scalar(predict(b, cfg, paths, 8), -label);
    return ad::mul(d, d);
  };
  auto r = finite_diff_check(f, inputs);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("checkpoint round trip") {
  auto cfg = tiny();
  auto params = randomized(cfg, 11);
  auto path = std::filesystem::temp_directory_path() / "cascadenet_ckpt_test.json";
  save_checkpoint(path, cfg, params);
  auto [c2, p2] = load_checkpoint(path);
  CHECK(p2 == params);
  CHECK(to_json(c2) == to_json(cfg));

  auto j = checkpoint_to_json(cfg, params);
  j["params"]["A"]["shape"] = {4, 3};
  CHECK_THROWS_AS(checkpoint_from_json(j), ConfigError);
  auto k = checkpoint_to_json(cfg, params);
  k["params"].erase("geo_logits");
  CHECK_THROWS_AS(checkpoint_from_json(k), ConfigError);
  std::filesystem::remove(path);
}

TEST_CASE("embedding import") {
  auto cfg = tiny();
  auto params = ModelParams::init(cfg);
  auto path = std::filesystem::temp_directory_path() / "cascadenet_emb_test.tsv";
  {
    std::ofstream out(path);
    out << "3\t1 2 3 4\n7\t0.5\t0.5\t0.5\t0.5\n";
  }
  CHECK(import_embeddings(path, params) == 2);
  CHECK(params.at("A")(2, 3) == 3.0);
  CHECK(params.at("A")(0, 7) == 0.5);
  {
    std::ofstream out(path);
    out << "3\t1 2 3\n";
  }
  CHECK_THROWS_AS(import_embeddings(path, params), ParseError);
  std::filesystem::remove(path);
}
