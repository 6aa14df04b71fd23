#pragma once

// Synthetic networks and independent-cascade datasets, label scaling,
// zero-growth downsampling and train/val/test splitting.

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cascadenet/graph.hpp"

namespace cascadenet {

struct CascadeRecord {
  std::string id;
  std::vector<NodeId> adopters;  // adoption order; roots first
  std::vector<NodeId> roots;
  std::map<int, std::int64_t> growth;  // horizon (rounds) -> size increment
  std::map<int, double> y;             // horizon -> log2(growth + 1)

  std::int64_t growth_at(int horizon) const;
  double label_at(int horizon) const;
};

struct SyntheticConfig {
  std::size_t n_nodes = 2000;
  std::size_t attachment_degree = 3;
  double activation_base = 0.15;
  int t_steps = 2;
  std::vector<int> horizon_steps{2};
  std::size_t n_cascades = 500;
  std::uint64_t seed = 42;

  // Throws ConfigError.
  void validate() const;
  int primary_horizon() const { return horizon_steps.front(); }
};

// log2(delta + 1) in binary64.
double scale_label(std::int64_t delta);

// Directed preferential attachment: node v >= attachment_degree draws
// attachment_degree distinct targets among 0..v-1 with probability
// proportional to in-degree + 1. Nodes below attachment_degree only link to
// all earlier nodes when forced (node 1 -> node 0 for degree 1). Weights are
// uniform integers in 1..5.
GlobalGraph generate_global(const SyntheticConfig& cfg);

struct IcRun {
  std::vector<NodeId> adopters;  // roots, then adoption order
  std::vector<int> round;        // round in which adopters[i] adopted; roots are 0
};

// Synchronous independent cascade: each node adopted in round r tries every
// out-neighbor once in round r + 1 with probability
// min(1, activation_base * weight). Runs at most `steps` rounds.
IcRun simulate_ic_rounds(const GlobalGraph& g, std::span<const NodeId> roots, int steps, double activation_base,
                         std::uint64_t rng_seed);
std::vector<NodeId> simulate_ic(const GlobalGraph& g, std::span<const NodeId> roots, int steps, double activation_base,
                                std::uint64_t rng_seed);

// Draws cascades until cfg.n_cascades usable ones (>= 2 adopters at t) exist
// or the attempt budget (20x) runs out. Output is ordered by cascade id and
// independent of the thread count. Throws GenerationError if none survive.
std::vector<CascadeRecord> make_dataset(const GlobalGraph& g, const SyntheticConfig& cfg, unsigned threads = 1);

// Keeps ceil((1 - fraction) * Z) of the Z zero-growth records (growth at
// `horizon` == 0), chosen uniformly; order is otherwise preserved.
std::vector<CascadeRecord> downsample_zero_growth(std::vector<CascadeRecord> records, double fraction,
                                                  std::uint64_t rng_seed, int horizon);

struct Splits {
  std::vector<CascadeRecord> train;
  std::vector<CascadeRecord> val;
  std::vector<CascadeRecord> test;
};

// Ratios must be non-negative and sum to 1 within 1e-9. Sizes are rounded
// from the ratios with the remainder going to test.
Splits split_dataset(std::vector<CascadeRecord> records, std::array<double, 3> ratios, std::uint64_t rng_seed);

}  // namespace cascadenet
