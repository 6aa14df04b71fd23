#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"

#include "cascadenet/cascade_gen.hpp"
#include "cascadenet/dataset_io.hpp"
#include "cascadenet/errors.hpp"

using namespace cascadenet;

TEST_CASE("preferential attachment construction") {
  SyntheticConfig cfg;
  cfg.n_nodes = 3;
  cfg.attachment_degree = 1;
  auto g = generate_global(cfg);
  CHECK(g.n_edges() == 2);
  CHECK(g.has_edge(1, 0));

  for (std::size_t m : {1u, 2u, 3u, 5u}) {
    cfg.n_nodes = 300;
    cfg.attachment_degree = m;
    auto h = generate_global(cfg);
    CHECK(h.n_edges() == (300 - m) * m);
    for (const auto& e : h.edges()) {
      CHECK(e.src > e.dst);
      CHECK(e.weight >= 1.0);
      CHECK(e.weight <= 5.0);
      CHECK(e.weight == std::floor(e.weight));
    }
  }
  cfg.n_nodes = 2;
  cfg.attachment_degree = 2;
  CHECK_THROWS_AS(generate_global(cfg), ConfigError);
}

TEST_CASE("in-degree distribution is heavy tailed") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SyntheticConfig cfg;
    cfg.seed = seed;
    auto g = generate_global(cfg);
    std::vector<std::size_t> deg(g.n_nodes());
    for (NodeId v = 0; v < g.n_nodes(); ++v) deg[v] = g.in_degree(v);
    std::sort(deg.begin(), deg.end());
    const double median = static_cast<double>(deg[deg.size() / 2]);
    CHECK(static_cast<double>(deg.back()) >= 10.0 * std::max(median, 1.0));
  }
}

TEST_CASE("independent cascade simulation") {
  GlobalGraph path(4, {{0, 1, 1}, {1, 2, 1}, {2, 3, 1}});
  std::vector<NodeId> root{0};
  GlobalGraph heavy(4, {{0, 1, 5}, {1, 2, 5}, {2, 3, 5}});
  CHECK(simulate_ic(heavy, root, 3, 0.5, 1) == std::vector<NodeId>{0, 1, 2, 3});
  CHECK(simulate_ic(heavy, root, 2, 0.5, 1).size() == 3);
  CHECK(simulate_ic(path, root, 3, 1e-12, 9) == std::vector<NodeId>{0});
  std::vector<NodeId> none;
  CHECK_THROWS_AS(simulate_ic(path, none, 3, 0.5, 1), DomainError);
}

TEST_CASE("star activation count follows Binomial(3, 0.5)") {
  GlobalGraph star(4, {{0, 1, 1}, {0, 2, 1}, {0, 3, 1}});
  std::vector<NodeId> root{0};
  const int n = 20000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += static_cast<double>(simulate_ic(star, root, 1, 0.5, derive_seed(3, "star", i)).size());
  const double mean = sum / n;
  CHECK(std::abs(mean - 2.5) <= 3.0 * std::sqrt(0.75 / n));
}

TEST_CASE("mean adopters rise with activation_base") {
  SyntheticConfig cfg;
  cfg.n_nodes = 400;
  auto g = generate_global(cfg);
  double prev_mean = 0.0, prev_se = 0.0;
  for (double p : {0.1, 0.3, 0.6}) {
    const int n = 10000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      std::vector<NodeId> root{static_cast<NodeId>(i % g.n_nodes())};
      const double k = static_cast<double>(simulate_ic(g, root, 3, p, derive_seed(4, "mono", i)).size());
      s += k;
      s2 += k * k;
    }
    const double mean = s / n;
    const double se = std::sqrt((s2 / n - mean * mean) / n);
    CHECK(mean + 2.0 * std::hypot(se, prev_se) >= prev_mean);
    prev_mean = mean;
    prev_se = se;
  }
}

TEST_CASE("label scaling") {
  CHECK(scale_label(7) == 3.0);
  CHECK(scale_label(1) == 1.0);
  CHECK(scale_label(0) == 0.0);
  CHECK_THROWS_AS(scale_label(-1), DomainError);
}

TEST_CASE("dataset records satisfy their invariants and are thread invariant") {
  SyntheticConfig cfg;
  cfg.n_nodes = 500;
  cfg.n_cascades = 120;
  cfg.horizon_steps = {1, 3};
  auto g = generate_global(cfg);
  auto a = make_dataset(g, cfg, 1);
  auto b = make_dataset(g, cfg, 4);
  REQUIRE(a.size() == 120);
  std::ostringstream sa, sb;
  write_jsonl(a, sa);
  write_jsonl(b, sb);
  CHECK(sa.str() == sb.str());
  bool saw_zero = false;
  for (const auto& r : a) {
    CHECK(r.adopters.size() >= 2);
    std::set<NodeId> u(r.adopters.begin(), r.adopters.end());
    CHECK(u.size() == r.adopters.size());
    CHECK(std::equal(r.roots.begin(), r.roots.end(), r.adopters.begin()));
    CHECK(r.growth_at(1) <= r.growth_at(3));
    for (const auto& [h, ds] : r.growth) {
      CHECK(ds >= 0);
      CHECK(r.y.at(h) == std::log2(static_cast<double>(ds) + 1.0));
      saw_zero = saw_zero || ds == 0;
    }
  }
  CHECK(saw_zero);
}

TEST_CASE("default dataset labels have real spread") {
  SyntheticConfig cfg;
  auto g = generate_global(cfg);
  auto recs = make_dataset(g, cfg, 1);
  std::vector<double> y;
  for (const auto& r : recs) y.push_back(r.label_at(2));
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean);
  CHECK(std::sqrt(var / static_cast<double>(y.size())) > 0.3);
}

TEST_CASE("zero usable cascades is a generation error") {
  SyntheticConfig cfg;
  cfg.n_nodes = 50;
  cfg.n_cascades = 0;
  auto g = generate_global(cfg);
  CHECK_THROWS_AS(make_dataset(g, cfg), GenerationError);
}

namespace {

std::vector<CascadeRecord> fixture(std::size_t zeros, std::size_t positives) {
  std::vector<CascadeRecord> out;
  for (std::size_t i = 0; i < zeros + positives; ++i) {
    CascadeRecord r;
    r.id = "r" + std::to_string(i);
    r.adopters = {0, 1};
    r.roots = {0};
    const std::int64_t g = i < zeros ? 0 : static_cast<std::int64_t>(i);
    r.growth[1] = g;
    r.y[1] = scale_label(g);
    out.push_back(r);
  }
  return out;
}

}  // namespace

TEST_CASE("zero-growth downsampling") {
  auto kept = downsample_zero_growth(fixture(10, 5), 0.5, 1, 1);
  CHECK(kept.size() == 10);
  CHECK(std::count_if(kept.begin(), kept.end(), [](const auto& r) { return r.growth_at(1) == 0; }) == 5);
  CHECK(downsample_zero_growth(fixture(10, 5), 0.0, 1, 1).size() == 15);
  CHECK(downsample_zero_growth(fixture(10, 5), 1.0, 1, 1).size() == 5);
  // Order is preserved.
  auto ids = [](const auto& v) {
    std::vector<std::string> s;
    for (const auto& r : v) s.push_back(r.id);
    return s;
  };
  auto k = ids(kept);
  CHECK(std::is_sorted(k.begin(), k.end(), [](const auto& a, const auto& b) {
    return std::stoi(a.substr(1)) < std::stoi(b.substr(1));
  }));
  CHECK_THROWS_AS(downsample_zero_growth(fixture(2, 2), 1.5, 1, 1), DomainError);
}

TEST_CASE("splitting") {
  auto s = split_dataset(fixture(5, 5), {0.8, 0.1, 0.1}, 3);
  CHECK(s.train.size() == 8);
  CHECK(s.val.size() == 1);
  CHECK(s.test.size() == 1);
  auto all = split_dataset(fixture(5, 5), {1.0, 0.0, 0.0}, 3);
  CHECK(all.train.size() == 10);
  auto again = split_dataset(fixture(5, 5), {0.8, 0.1, 0.1}, 3);
  CHECK(again.val.front().id == s.val.front().id);
  CHECK(again.test.front().id == s.test.front().id);
  CHECK_THROWS_AS(split_dataset(fixture(5, 5), {0.5, 0.1, 0.1}, 3), DomainError);
  CHECK_THROWS_AS(split_dataset(fixture(5, 5), {1.2, -0.1, -0.1}, 3), DomainError);
}

TEST_CASE("jsonl round trip and validation") {
  auto recs = fixture(2, 2);
  std::stringstream ss;
  write_jsonl(recs, ss);
  auto back = read_jsonl(ss);
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].id == recs[i].id);
    CHECK(back[i].adopters == recs[i].adopters);
    CHECK(back[i].growth == recs[i].growth);
    CHECK(back[i].y == recs[i].y);
  }
  std::istringstream bad_root(R"({"id":"a","adopters":[1,2],"roots":[3],"growth":{"1":0}})");
  CHECK_THROWS(read_jsonl(bad_root));
  std::istringstream bad_label(R"({"id":"a","adopters":[1,2],"roots":[1],"growth":{"1":3},"y":{"1":1.0}})");
  CHECK_THROWS(read_jsonl(bad_label));
  std::istringstream no_y(R"({"id":"a","adopters":[1,2],"roots":[1],"growth":{"1":3}})");
  CHECK(read_jsonl(no_y).front().y.at(1) == 2.0);
}
