#include "cascadenet/cascade_gen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include "cascadenet/errors.hpp"
#include "cascadenet/parallel.hpp"
#include "cascadenet/rng.hpp"

namespace cascadenet {

std::int64_t CascadeRecord::growth_at(int horizon) const {
  auto it = growth.find(horizon);
  if (it == growth.end()) throw DomainError("cascade " + id + " has no growth for horizon " + std::to_string(horizon));
  return it->second;
}

double CascadeRecord::label_at(int horizon) const {
  auto it = y.find(horizon);
  if (it == y.end()) throw DomainError("cascade " + id + " has no label for horizon " + std::to_string(horizon));
  return it->second;
}

void SyntheticConfig::validate() const {
  if (attachment_degree < 1) throw ConfigError("attachment_degree must be >= 1");
  if (n_nodes < attachment_degree + 1) throw ConfigError("n_nodes must be >= attachment_degree + 1");
  if (!(activation_base > 0.0 && activation_base < 1.0)) throw ConfigError("activation_base must be in (0, 1)");
  if (t_steps < 1) throw ConfigError("t_steps must be >= 1");
  if (horizon_steps.empty()) throw ConfigError("at least one horizon is required");
  for (int h : horizon_steps) {
    if (h < 1) throw ConfigError("horizon steps must be >= 1");
  }
}

double scale_label(std::int64_t delta) {
  if (delta < 0) throw DomainError("growth must be non-negative");
  return std::log2(static_cast<double>(delta) + 1.0);
}

GlobalGraph generate_global(const SyntheticConfig& cfg) {
  cfg.validate();
  const std::size_t m = cfg.attachment_degree;
  CounterRng rng(derive_seed(cfg.seed, "global-graph"));
  // Each node sits in the urn once for the +1 and once per received edge, so a
  // uniform urn draw is proportional to in-degree + 1.
  std::vector<NodeId> urn;
  urn.reserve(cfg.n_nodes * (m + 1));
  std::vector<Edge> edges;
  edges.reserve((cfg.n_nodes - m) * m);
  for (NodeId v = 0; v < m; ++v) urn.push_back(v);
  std::vector<NodeId> picked;
  for (auto v = static_cast<NodeId>(m); v < cfg.n_nodes; ++v) {
    picked.clear();
    while (picked.size() < m) {
      const NodeId target = urn[rng.below(urn.size())];
      if (std::find(picked.begin(), picked.end(), target) == picked.end()) picked.push_back(target);
    }
    for (NodeId target : picked) {
      const double w = static_cast<double>(1 + rng.below(5));
      edges.push_back({v, target, w});
      urn.push_back(target);
    }
    urn.push_back(v);
  }
  return GlobalGraph(cfg.n_nodes, std::move(edges));
}

IcRun simulate_ic_rounds(const GlobalGraph& g, std::span<const NodeId> roots, int steps, double activation_base,
                         std::uint64_t rng_seed) {
  if (roots.empty()) throw DomainError("independent cascade needs at least one root");
  if (steps < 0) throw DomainError("steps must be non-negative");
  CounterRng rng(rng_seed);
  IcRun run;
  std::unordered_set<NodeId> active;
  for (NodeId r : roots) {
    if (!g.contains(r)) throw DomainError("root " + std::to_string(r) + " is not in the graph");
    if (active.insert(r).second) {
      run.adopters.push_back(r);
      run.round.push_back(0);
    }
  }
  std::size_t frontier_begin = 0;
  for (int step = 1; step <= steps; ++step) {
    const std::size_t frontier_end = run.adopters.size();
    if (frontier_begin == frontier_end) break;
    for (std::size_t i = frontier_begin; i < frontier_end; ++i) {
      for (const auto& nb : g.out_neighbors(run.adopters[i])) {
        if (active.contains(nb.node)) continue;
        const double p = std::min(1.0, activation_base * nb.weight);
        if (rng.uniform() < p) {
          active.insert(nb.node);
          run.adopters.push_back(nb.node);
          run.round.push_back(step);
        }
      }
    }
    frontier_begin = frontier_end;
  }
  return run;
}

std::vector<NodeId> simulate_ic(const GlobalGraph& g, std::span<const NodeId> roots, int steps, double activation_base,
                                std::uint64_t rng_seed) {
  return simulate_ic_rounds(g, roots, steps, activation_base, rng_seed).adopters;
}

namespace {

struct Attempt {
  bool usable = false;
  std::vector<NodeId> adopters;
  std::vector<NodeId> roots;
  std::map<int, std::int64_t> growth;
};

Attempt run_attempt(const GlobalGraph& g, const SyntheticConfig& cfg, std::size_t index) {
  CounterRng rng(derive_seed(cfg.seed, "cascade", index));
  const std::size_t n_roots = std::min<std::size_t>(1 + rng.below(2), g.n_nodes());
  std::vector<NodeId> roots;
  while (roots.size() < n_roots) {
    const auto r = static_cast<NodeId>(rng.below(g.n_nodes()));
    if (std::find(roots.begin(), roots.end(), r) == roots.end()) roots.push_back(r);
  }
  const int max_h = *std::max_element(cfg.horizon_steps.begin(), cfg.horizon_steps.end());
  const auto run = simulate_ic_rounds(g, roots, cfg.t_steps + max_h, cfg.activation_base,
                                      derive_seed(cfg.seed, "ic", index));
  Attempt a;
  const auto at_t = static_cast<std::size_t>(
      std::count_if(run.round.begin(), run.round.end(), [&](int r) { return r <= cfg.t_steps; }));
  if (at_t < 2) return a;
  a.usable = true;
  a.roots = std::move(roots);
  a.adopters.assign(run.adopters.begin(), run.adopters.begin() + static_cast<std::ptrdiff_t>(at_t));
  for (int h : cfg.horizon_steps) {
    const auto upto = std::count_if(run.round.begin(), run.round.end(), [&](int r) { return r <= cfg.t_steps + h; });
    a.growth[h] = static_cast<std::int64_t>(upto) - static_cast<std::int64_t>(at_t);
  }
  return a;
}

}  // namespace

std::vector<CascadeRecord> make_dataset(const GlobalGraph& g, const SyntheticConfig& cfg, unsigned threads) {
  cfg.validate();
  if (g.n_nodes() == 0) throw GenerationError("zero usable cascades: global graph is empty");
  std::vector<CascadeRecord> out;
  const std::size_t max_attempts = 20 * cfg.n_cascades;
  constexpr std::size_t kBlock = 512;
  std::size_t next_attempt = 0;
  while (out.size() < cfg.n_cascades && next_attempt < max_attempts) {
    const std::size_t block = std::min(kBlock, max_attempts - next_attempt);
    std::vector<Attempt> attempts(block);
    parallel_for(block, threads, [&](std::size_t i) { attempts[i] = run_attempt(g, cfg, next_attempt + i); });
    for (auto& a : attempts) {
      if (!a.usable || out.size() >= cfg.n_cascades) continue;
      CascadeRecord rec;
      char buf[32];
      std::snprintf(buf, sizeof buf, "c%06zu", out.size());
      rec.id = buf;
      rec.adopters = std::move(a.adopters);
      rec.roots = std::move(a.roots);
      rec.growth = std::move(a.growth);
      for (const auto& [h, ds] : rec.growth) rec.y[h] = scale_label(ds);
      out.push_back(std::move(rec));
    }
    next_attempt += block;
  }
  if (out.empty()) throw GenerationError("zero usable cascades after filtering");
  return out;
}

std::vector<CascadeRecord> downsample_zero_growth(std::vector<CascadeRecord> records, double fraction,
                                                  std::uint64_t rng_seed, int horizon) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw DomainError("downsampling fraction must be in [0, 1]");
  std::vector<std::size_t> zeros;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].growth_at(horizon) == 0) zeros.push_back(i);
  }
  // The small slack keeps e.g. (1 - 0.7) * 10 from rounding up to 4.
  const auto keep = static_cast<std::size_t>(std::ceil((1.0 - fraction) * static_cast<double>(zeros.size()) - 1e-9));
  CounterRng rng(rng_seed);
  shuffle(zeros.begin(), zeros.end(), rng);
  std::vector<char> drop(records.size(), 0);
  for (std::size_t i = keep; i < zeros.size(); ++i) drop[zeros[i]] = 1;
  std::vector<CascadeRecord> out;
  out.reserve(records.size() - (zeros.size() - keep));
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!drop[i]) out.push_back(std::move(records[i]));
  }
  return out;
}

Splits split_dataset(std::vector<CascadeRecord> records, std::array<double, 3> ratios, std::uint64_t rng_seed) {
  double total = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw DomainError("split ratios must be non-negative");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DomainError("split ratios must sum to 1");
  const std::size_t n = records.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  CounterRng rng(rng_seed);
  shuffle(order.begin(), order.end(), rng);
  const auto n_train = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(ratios[0] * static_cast<double>(n))));
  const auto n_val =
      std::min<std::size_t>(n - n_train, static_cast<std::size_t>(std::llround(ratios[1] * static_cast<double>(n))));
  // Each split keeps the input order of its members.
  std::vector<int> which(n, 2);
  for (std::size_t i = 0; i < n_train; ++i) which[order[i]] = 0;
  for (std::size_t i = n_train; i < n_train + n_val; ++i) which[order[i]] = 1;
  Splits s;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = which[i] == 0 ? s.train : which[i] == 1 ? s.val : s.test;
    dst.push_back(std::move(records[i]));
  }
  return s;
}

}  // namespace cascadenet
