#include "cascadenet/walker.hpp"

#include <algorithm>
#include <numeric>
#include <optional>

#include "cascadenet/errors.hpp"
#include "cascadenet/rng.hpp"

namespace cascadenet {

Scorer parse_scorer(std::string_view name) {
  if (name == "edge") return Scorer::EdgeWeight;
  if (name == "deg") return Scorer::LocalDegree;
  if (name == "DEG") return Scorer::GlobalDegree;
  throw ConfigError("unknown scorer '" + std::string(name) + "' (expected edge, deg or DEG)");
}

std::string_view scorer_name(Scorer s) {
  switch (s) {
    case Scorer::EdgeWeight: return "edge";
    case Scorer::LocalDegree: return "deg";
    case Scorer::GlobalDegree: return "DEG";
  }
  return "?";
}

void WalkConfig::validate() const {
  if (K < 1) throw ConfigError("walk.K must be >= 1");
  if (T < 1) throw ConfigError("walk.T must be >= 1");
  if (!(alpha >= 0.0)) throw ConfigError("walk.alpha must be >= 0");
}

double Distribution::at(NodeId v) const {
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (support[i] == v) return prob[i];
  }
  return 0.0;
}

std::size_t PathSet::length(std::size_t k) const {
  const auto r = row(k);
  return static_cast<std::size_t>(std::find(r.begin(), r.end(), pad_) - r.begin());
}

namespace {

double node_score(const CascadeGraph& c, const GlobalGraph& g, std::size_t local, Scorer scorer) {
  switch (scorer) {
    case Scorer::LocalDegree: return static_cast<double>(c.local_out(local).size());
    case Scorer::GlobalDegree: return static_cast<double>(g.out_degree(c.nodes()[local]));
    case Scorer::EdgeWeight: {
      double sum = 0.0;
      for (const auto& nb : c.local_out(local)) sum += nb.weight;
      return sum;
    }
  }
  return 0.0;
}

// Unnormalized transition masses sc_t(u) + alpha over local out-neighbors.
void transition_masses(const CascadeGraph& c, const GlobalGraph& g, std::size_t local, Scorer scorer, double alpha,
                       std::vector<double>& out) {
  const auto nbrs = c.local_out(local);
  out.resize(nbrs.size());
  for (std::size_t j = 0; j < nbrs.size(); ++j) {
    const double s = scorer == Scorer::EdgeWeight ? nbrs[j].weight : node_score(c, g, nbrs[j].local, scorer);
    out[j] = s + alpha;
  }
}

void jump_masses(const CascadeGraph& c, const GlobalGraph& g, Scorer scorer, double alpha, std::vector<double>& out) {
  out.resize(c.n_nodes());
  for (std::size_t i = 0; i < c.n_nodes(); ++i) out[i] = node_score(c, g, i, scorer) + alpha;
}

double checked_total(const std::vector<double>& masses) {
  const double total = std::accumulate(masses.begin(), masses.end(), 0.0);
  if (!(total > 0.0)) throw DomainError("degenerate walk distribution: every score is 0 and alpha is 0");
  return total;
}

// Cumulative masses for inverse-CDF sampling.
struct Sampler {
  std::vector<double> cumulative;

  explicit Sampler(const std::vector<double>& masses) : cumulative(masses.size()) {
    std::partial_sum(masses.begin(), masses.end(), cumulative.begin());
  }
  std::size_t draw(CounterRng& rng) const {
    const double u = rng.uniform() * cumulative.back();
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
  }
};

}  // namespace

Distribution transition_probs(const CascadeGraph& c, const GlobalGraph& g, NodeId v, Scorer scorer, double alpha) {
  const std::size_t local = c.local_index(v);
  Distribution d;
  const auto nbrs = c.local_out(local);
  if (nbrs.empty()) return d;
  std::vector<double> masses;
  transition_masses(c, g, local, scorer, alpha, masses);
  const double total = checked_total(masses);
  for (std::size_t j = 0; j < nbrs.size(); ++j) {
    d.support.push_back(c.nodes()[nbrs[j].local]);
    d.prob.push_back(masses[j] / total);
  }
  return d;
}

Distribution jump_probs(const CascadeGraph& c, const GlobalGraph& g, Scorer scorer, double alpha) {
  if (c.n_nodes() == 0) throw DomainError("cascade graph has no nodes");
  std::vector<double> masses;
  jump_masses(c, g, scorer, alpha, masses);
  const double total = checked_total(masses);
  Distribution d;
  d.support.assign(c.nodes().begin(), c.nodes().end());
  d.prob.resize(masses.size());
  for (std::size_t i = 0; i < masses.size(); ++i) d.prob[i] = masses[i] / total;
  return d;
}

std::uint64_t cascade_walk_seed(std::uint64_t walk_seed, std::string_view cascade_id) {
  return derive_seed(walk_seed, "walk", cascade_id);
}

PathSet sample_paths(const CascadeGraph& c, const GlobalGraph& g, const WalkConfig& cfg, std::string cascade_id) {
  cfg.validate();
  const std::size_t n = c.n_nodes();
  if (n == 0) throw DomainError("cascade graph has no nodes");
  if (cfg.start_mode == StartMode::RootsOnly && c.roots().empty()) {
    throw DomainError("root-only sampling needs a cascade with roots");
  }
  PathSet paths(cfg.K, cfg.T, g.pad_id(), std::move(cascade_id));
  CounterRng rng(cfg.seed);

  std::vector<Sampler> step;
  std::vector<double> masses;
  if (cfg.T > 1) {
    step.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      transition_masses(c, g, i, cfg.scorer, cfg.alpha, masses);
      if (!masses.empty()) checked_total(masses);
      step.emplace_back(masses);
    }
  }

  std::vector<std::size_t> roots_local;
  for (NodeId r : c.roots()) roots_local.push_back(c.local_index(r));
  std::vector<std::size_t> root_cycle;

  std::optional<Sampler> jump;
  if (cfg.start_mode == StartMode::Jump) {
    jump_masses(c, g, cfg.scorer, cfg.alpha, masses);
    checked_total(masses);
    jump.emplace(masses);
  }

  for (std::size_t k = 0; k < cfg.K; ++k) {
    std::size_t cur = 0;
    switch (cfg.start_mode) {
      case StartMode::Jump: cur = jump->draw(rng); break;
      case StartMode::EachNode: cur = k % n; break;
      case StartMode::RootsOnly: {
        const std::size_t pos = k % roots_local.size();
        if (pos == 0) {
          root_cycle = roots_local;
          shuffle(root_cycle.begin(), root_cycle.end(), rng);
        }
        cur = root_cycle[pos];
        break;
      }
    }
    paths.at(k, 0) = c.nodes()[cur];
    for (std::size_t i = 1; i < cfg.T; ++i) {
      const auto nbrs = c.local_out(cur);
      if (nbrs.empty()) break;
      cur = nbrs[step[cur].draw(rng)].local;
      paths.at(k, i) = c.nodes()[cur];
    }
  }
  return paths;
}

}  // namespace cascadenet
