#pragma once

// Random-walk path sampling over cascade graphs.
//
// Start nodes are drawn with p(u) ∝ sc_j(u) + alpha over the cascade's nodes;
// each next node is drawn from the current node's out-neighbors in the cascade
// with p(u) ∝ sc_t(u) + alpha. A path stops at length T or at a node with no
// out-neighbors and is then filled with the PAD id.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cascadenet/graph.hpp"

namespace cascadenet {

enum class Scorer {
  EdgeWeight,    // transition: weight(v,u); jump: out-weight sum within the cascade
  LocalDegree,   // out-degree in the cascade graph
  GlobalDegree,  // out-degree in the global graph
};

enum class StartMode {
  Jump,       // start nodes from the jump distribution
  RootsOnly,  // cycle through the roots, reshuffled every cycle
  EachNode,   // row k starts at cascade node k mod |V_c| (bag-of-nodes)
};

Scorer parse_scorer(std::string_view name);  // edge | deg | DEG
std::string_view scorer_name(Scorer s);

struct WalkConfig {
  std::size_t K = 200;
  std::size_t T = 10;
  double alpha = 0.01;
  Scorer scorer = Scorer::LocalDegree;
  StartMode start_mode = StartMode::Jump;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

struct Distribution {
  std::vector<NodeId> support;
  std::vector<double> prob;

  bool empty() const noexcept { return support.empty(); }
  double at(NodeId v) const;  // 0 when v is not in the support
};

// Empty distribution when v has no out-neighbors in the cascade (dead end).
// Throws DomainError when v is not a cascade node or when every candidate has
// score 0 and alpha is 0.
Distribution transition_probs(const CascadeGraph& c, const GlobalGraph& g, NodeId v, Scorer scorer, double alpha);
Distribution jump_probs(const CascadeGraph& c, const GlobalGraph& g, Scorer scorer, double alpha);

class PathSet {
 public:
  PathSet() = default;
  PathSet(std::size_t K, std::size_t T, NodeId pad, std::string cascade_id = {})
      : K_(K), T_(T), pad_(pad), cascade_id_(std::move(cascade_id)), ids_(K * T, pad) {}

  std::size_t K() const noexcept { return K_; }
  std::size_t T() const noexcept { return T_; }
  NodeId pad() const noexcept { return pad_; }
  const std::string& cascade_id() const noexcept { return cascade_id_; }

  NodeId at(std::size_t k, std::size_t i) const { return ids_[k * T_ + i]; }
  NodeId& at(std::size_t k, std::size_t i) { return ids_[k * T_ + i]; }
  std::span<const NodeId> row(std::size_t k) const { return {ids_.data() + k * T_, T_}; }
  std::span<const NodeId> ids() const noexcept { return ids_; }

  // Non-PAD length of row k.
  std::size_t length(std::size_t k) const;

  friend bool operator==(const PathSet&, const PathSet&) = default;

 private:
  std::size_t K_ = 0;
  std::size_t T_ = 0;
  NodeId pad_ = 0;
  std::string cascade_id_;
  std::vector<NodeId> ids_;
};

// Per-cascade walk seed; independent of where the cascade sits in a file.
std::uint64_t cascade_walk_seed(std::uint64_t walk_seed, std::string_view cascade_id);

// Samples cfg.K rows of length cfg.T with the stream keyed by cfg.seed.
// RootsOnly requires the cascade to have roots.
PathSet sample_paths(const CascadeGraph& c, const GlobalGraph& g, const WalkConfig& cfg, std::string cascade_id = {});

}  // namespace cascadenet
