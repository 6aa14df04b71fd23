// Command-line front end. Results go to stdout as JSON; progress and errors
// go to stderr. Exit codes: 0 ok, 2 usage/config/data, 3 numerical abort,
// 4 ablation finished with failed rows.

#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cascadenet/errors.hpp"
#include "cascadenet/experiment.hpp"

namespace fs = std::filesystem;
using namespace cascadenet;
using nlohmann::json;

namespace {

// Flags mirroring RunConfig keys for one subcommand. Values stay as text until
// the config file and environment have been merged, so flags win.
struct KeyFlags {
  std::map<std::string, std::string> text;
  std::map<std::string, CLI::Option*> opts;
  std::string config_file;

  void add(CLI::App* app, std::initializer_list<std::string_view> prefixes) {
    app->add_option("--config", config_file, "JSON file of dotted settings");
    for (const auto& k : RunConfig::keys()) {
      bool take = false;
      for (auto p : prefixes) take = take || k.name == p || (p.ends_with('.') && k.name.starts_with(p));
      if (!take) continue;
      std::string names = "--" + k.name;
      if (!k.alias.empty()) names += ",--" + k.alias;
      auto& slot = text[k.name];
      CLI::Option* o = nullptr;
      if (k.default_value.is_boolean()) {
        o = app->add_flag(names + "{true}", slot, k.help);
      } else {
        o = app->add_option(names, slot, k.help);
      }
      opts[k.name] = o;
    }
  }

  RunConfig resolve() const {
    RunConfig rc;
    if (!config_file.empty()) rc.merge_file(config_file);
    rc.apply_env();
    for (const auto& [key, opt] : opts) {
      if (opt->count() > 0) rc.set(key, text.at(key));
    }
    return rc;
  }
};

void print(const json& j) { std::cout << j.dump(2) << std::endl; }

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  std::string item;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == ',') {
      if (!item.empty()) {
        std::size_t used = 0;
        double v = 0.0;
        try {
          v = std::stod(item, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != item.size() || !(v >= 0.0)) throw ConfigError("bad --l2-grid entry '" + item + "'");
        out.push_back(v);
      }
      item.clear();
    } else if (text[i] != ' ') {
      item += text[i];
    }
  }
  if (out.empty()) throw ConfigError("--l2-grid is empty");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cascade growth prediction from random-walk path sets"};
  app.require_subcommand(1);
  std::function<int()> action;

  // gen-data
  KeyFlags gen_flags;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic global graph and cascade splits");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen_flags.add(gen, {"seed", "threads", "data."});
  gen->callback([&] {
    action = [&] {
      print(generate_dataset(gen_flags.resolve(), gen_out));
      return 0;
    };
  });

  // sample-walks
  KeyFlags walk_flags;
  std::string walk_data, walk_split = "train", walk_out;
  auto* sw = app.add_subcommand("sample-walks", "Dump the sampled paths of one split as JSON Lines");
  sw->add_option("--data", walk_data, "dataset directory")->required();
  sw->add_option("--split", walk_split, "train | val | test");
  sw->add_option("--out", walk_out, "output .jsonl file")->required();
  walk_flags.add(sw, {"seed", "threads", "walk.", "model."});
  sw->callback([&] {
    action = [&] {
      const auto rc = walk_flags.resolve();
      print(dump_walks(rc, load_dataset(walk_data), walk_split, walk_out));
      return 0;
    };
  });

  // train
  KeyFlags train_flags;
  std::string train_data, train_out;
  auto* tr = app.add_subcommand("train", "Train one model variant");
  tr->add_option("--data", train_data, "dataset directory")->required();
  tr->add_option("--out", train_out, "output directory for ckpt_best.json and report.json")->required();
  train_flags.add(tr, {"seed", "threads", "walk.", "model.", "train."});
  tr->callback([&] {
    action = [&] {
      const auto rc = train_flags.resolve();
      auto run = run_training(rc, load_dataset(train_data), fs::path(train_out));
      const auto& rep = run.result.report;
      print({{"out", train_out},
             {"variant", variant_name(run.model.variant)},
             {"scorer", scorer_name(run.walk.scorer)},
             {"best_epoch", rep.best_epoch},
             {"best_val_mse", rep.best_val_mse},
             {"test_mse", rep.test_mse ? json(*rep.test_mse) : json(nullptr)},
             {"untrained_test_mse", run.report["untrained_test_mse"]}});
      return 0;
    };
  });

  // eval
  std::string eval_ckpt, eval_data, eval_split = "test";
  KeyFlags eval_flags;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  ev->add_option("--ckpt", eval_ckpt, "checkpoint JSON")->required();
  ev->add_option("--data", eval_data, "dataset directory")->required();
  ev->add_option("--split", eval_split, "train | val | test");
  eval_flags.add(ev, {"threads"});
  ev->callback([&] {
    action = [&] {
      const auto rc = eval_flags.resolve();
      print(evaluate_checkpoint(eval_ckpt, load_dataset(eval_data), eval_split, rc.threads()));
      return 0;
    };
  });

  // features-baseline
  KeyFlags fb_flags;
  std::string fb_data, fb_grid, fb_dump;
  BaselineOptions fb_opt;
  auto* fb = app.add_subcommand("features-baseline", "Fit the structural-feature ridge baseline");
  fb->add_option("--data", fb_data, "dataset directory")->required();
  fb->add_option("--l2-grid", fb_grid, "comma-separated L2 coefficients (default 1,0.5,...,1e-8)");
  fb->add_flag("--identity", fb_opt.features.include_identity, "add hashed node-identity indicators");
  fb->add_flag("--exact-identity", fb_opt.features.exact_identity, "one indicator per global node");
  fb->add_option("--identity-dim", fb_opt.features.identity_dim, "hashed identity dimension");
  fb->add_option("--dump-features", fb_dump, "write every split's features as CSV");
  fb_flags.add(fb, {"seed", "threads", "train.horizon"});
  fb->callback([&] {
    action = [&] {
      const auto rc = fb_flags.resolve();
      if (!fb_grid.empty()) fb_opt.l2_grid = parse_grid(fb_grid);
      if (fb_opt.features.exact_identity) fb_opt.features.include_identity = true;
      if (!fb_dump.empty()) fb_opt.dump_csv = fb_dump;
      print(run_features_baseline(rc, load_dataset(fb_data), fb_opt));
      return 0;
    };
  });

  // ablate
  KeyFlags ab_flags;
  std::string ab_data, ab_out, ab_runs;
  auto* ab = app.add_subcommand("ablate", "Train every variant/scorer row and tabulate test MSE");
  ab->add_option("--data", ab_data, "dataset directory")->required();
  ab->add_option("--out", ab_out, "output directory for ablation.md/json and per-row runs")->required();
  ab->add_option("--runs", ab_runs, "rows as variant:scorer, comma-separated");
  ab_flags.add(ab, {"seed", "threads", "walk.", "model.", "train."});
  ab->callback([&] {
    action = [&] {
      const auto rc = ab_flags.resolve();
      const auto rows = ab_runs.empty() ? default_ablation_rows() : parse_ablation_rows(ab_runs);
      auto out = run_ablation(rc, load_dataset(ab_data), rows, fs::path(ab_out));
      std::cerr << out.markdown;
      print(out.table);
      return out.partial ? 4 : 0;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    return action();
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
