#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "cascadenet/errors.hpp"
#include "cascadenet/experiment.hpp"

using namespace cascadenet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("cascadenet_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig small_run() {
  RunConfig rc;
  rc.merge({{"data.n_nodes", 150},
            {"data.n_cascades", 40},
            {"walk.K", 8},
            {"walk.T", 4},
            {"model.B", 2},
            {"model.H", 4},
            {"train.epochs", 2},
            {"threads", 1}});
  return rc;
}

}  // namespace

TEST_CASE("config defaults and typed merging") {
  RunConfig rc;
  CHECK(rc.seed() == 42);
  CHECK(rc.at("walk.K") == 200);
  CHECK(rc.at("model.variant") == "full");
  CHECK_THROWS_AS(rc.merge({{"walk.Q", 1}}), ConfigError);
  CHECK_THROWS_AS(rc.merge({{"walk.K", "many"}}), ConfigError);
  CHECK_THROWS_AS(rc.set("train.lr", "fast"), ConfigError);
  rc.set("train.lr", "0.5");
  CHECK(rc.train().learning_rate == 0.5);
  rc.set("model.normalize_attention", "true");
  CHECK(rc.model(10).normalize_attention);
  rc.set("walk.scorer", "pagerank");
  CHECK_THROWS_AS(rc.scorer(), ConfigError);
  rc.set("walk.scorer", "deg");
  rc.set("data.split", "0.5,0.25,0.25");
  CHECK(rc.split_ratios() == std::array<double, 3>{0.5, 0.25, 0.25});
}

TEST_CASE("config precedence: defaults, file, environment, explicit") {
  auto dir = scratch("precedence");
  {
    std::ofstream f(dir / "cfg.json");
    f << R"({"seed": 5, "walk.K": 40, "train.lr": 0.2})";
  }
  RunConfig rc;
  rc.merge_file(dir / "cfg.json");
  CHECK(rc.seed() == 5);
  CHECK(rc.at("walk.K") == 40);
  ::setenv("CASCADE_SEED", "77", 1);
  rc.apply_env();
  CHECK(rc.seed() == 77);
  rc.set("seed", "9");
  CHECK(rc.seed() == 9);
  ::setenv("CASCADE_SEED", "not-a-number", 1);
  CHECK_THROWS_AS(rc.apply_env(), ConfigError);
  ::unsetenv("CASCADE_SEED");
  CHECK(rc.at("train.lr") == 0.2);

  {
    std::ofstream f(dir / "bad.json");
    f << "{\"seed\": ";
  }
  CHECK_THROWS(rc.merge_file(dir / "bad.json"));
  CHECK_THROWS(rc.merge_file(dir / "absent.json"));
}

TEST_CASE("echo selects prefixes and always carries the seed") {
  RunConfig rc;
  auto e = rc.echo({"walk."});
  CHECK(e.contains("seed"));
  CHECK(e.contains("walk.K"));
  CHECK_FALSE(e.contains("train.lr"));
}

TEST_CASE("dataset generation is deterministic and self-describing") {
  auto rc = small_run();
  auto a = scratch("gen_a"), b = scratch("gen_b");
  generate_dataset(rc, a);
  rc.set("threads", "4");
  generate_dataset(rc, b);
  for (const char* f : {"global.tsv", "train.jsonl", "val.jsonl", "test.jsonl", "meta.json"}) {
    CHECK(slurp(a / f) == slurp(b / f));
  }
  auto ds = load_dataset(a);
  CHECK(ds.meta["config"]["data.n_cascades"] == 40);
  CHECK(ds.meta["seed"] == 42);
  CHECK(ds.graph.n_nodes() == 150);
  CHECK(!ds.train.empty());

  // Re-running from the embedded config reproduces the files.
  RunConfig again;
  again.merge(ds.meta["config"]);
  auto c = scratch("gen_c");
  generate_dataset(again, c);
  CHECK(slurp(a / "train.jsonl") == slurp(c / "train.jsonl"));
}

TEST_CASE("walk dumps use -1 for padding") {
  auto rc = small_run();
  auto dir = scratch("walks");
  generate_dataset(rc, dir);
  auto ds = load_dataset(dir);
  dump_walks(rc, ds, "train", dir / "walks.jsonl");
  std::ifstream in(dir / "walks.jsonl");
  std::string line;
  std::size_t rows = 0;
  bool saw_pad = false;
  while (std::getline(in, line)) {
    auto j = json::parse(line);
    CHECK(j["paths"].size() == 8);
    for (const auto& p : j["paths"]) {
      CHECK(p.size() == 4);
      for (const auto& v : p) saw_pad = saw_pad || v == -1;
    }
    ++rows;
  }
  CHECK(rows == ds.train.size());
  CHECK(saw_pad);
  CHECK_THROWS(dump_walks(rc, ds, "holdout", dir / "x.jsonl"));
}

TEST_CASE("training run writes a checkpoint that evaluates to the reported numbers") {
  auto rc = small_run();
  auto dir = scratch("train");
  generate_dataset(rc, dir / "data");
  auto ds = load_dataset(dir / "data");
  auto run = run_training(rc, ds, dir / "run");
  REQUIRE(fs::exists(dir / "run" / "ckpt_best.json"));
  auto report = json::parse(slurp(dir / "run" / "report.json"));
  CHECK(report["variant"] == "full");
  CHECK(report["meta"]["config"]["walk.K"] == 8);
  auto ev = evaluate_checkpoint(dir / "run" / "ckpt_best.json", ds, "test", 1);
  CHECK(ev["mse"].get<double>() == *run.result.report.test_mse);
  auto ev4 = evaluate_checkpoint(dir / "run" / "ckpt_best.json", ds, "test", 4);
  CHECK(ev4["mse"] == ev["mse"]);

  RunConfig other = rc;
  other.set("data.n_nodes", "90");
  auto dir2 = scratch("train_other");
  generate_dataset(other, dir2);
  CHECK_THROWS(evaluate_checkpoint(dir / "run" / "ckpt_best.json", load_dataset(dir2), "test", 1));
}

TEST_CASE("feature baseline selects l2 from the grid") {
  auto rc = small_run();
  auto dir = scratch("baseline");
  generate_dataset(rc, dir);
  auto ds = load_dataset(dir);
  CHECK(default_l2_grid().front() == 1.0);
  CHECK(default_l2_grid().back() == 1e-8);
  BaselineOptions opt;
  opt.l2_grid = {1.0, 0.1};
  opt.dump_csv = dir / "features.csv";
  auto out = run_features_baseline(rc, ds, opt);
  const double best = out["best_l2"].get<double>();
  CHECK((best == 1.0 || best == 0.1));
  CHECK(out["test_mse"].get<double>() >= 0.0);
  CHECK(fs::exists(dir / "features.csv"));
}

TEST_CASE("ablation rows") {
  auto rows = parse_ablation_rows("full:edge,bag:deg,root:DEG");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].variant == Variant::Full);
  CHECK(rows[0].scorer == Scorer::EdgeWeight);
  CHECK(rows[2].scorer == Scorer::GlobalDegree);
  CHECK(parse_ablation_rows("fixed")[0].scorer == Scorer::LocalDegree);
  CHECK_THROWS_AS(parse_ablation_rows("full:pagerank"), ConfigError);
  CHECK_THROWS_AS(parse_ablation_rows("nope:deg"), ConfigError);
  CHECK(default_ablation_rows().size() == 6);

  auto rc = small_run();
  auto dir = scratch("ablate");
  generate_dataset(rc, dir / "data");
  auto ds = load_dataset(dir / "data");
  auto out = run_ablation(rc, ds, parse_ablation_rows("full:deg,bag:deg"), dir / "ab");
  CHECK_FALSE(out.partial);
  REQUIRE(out.table["rows"].size() == 2);
  CHECK(out.table["rows"][1]["variant"] == "bag");
  CHECK(out.markdown.find("| bag | deg |") != std::string::npos);
  CHECK(fs::exists(dir / "ab" / "ablation.json"));
  CHECK(fs::exists(dir / "ab" / "ablation.md"));
}
