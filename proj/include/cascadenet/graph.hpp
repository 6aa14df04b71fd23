#pragma once

// Global social network, induced cascade graphs and frontier graphs.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace cascadenet {

using NodeId = std::uint32_t;

enum class Direction { Out, In };

struct Edge {
  NodeId src;
  NodeId dst;
  double weight;

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct Neighbor {
  NodeId node;
  double weight;
};

// Immutable weighted directed graph in CSR form. Out-lists are sorted by
// destination and in-lists by source, so edge lookups are binary searches.
class GlobalGraph {
 public:
  GlobalGraph() = default;

  // Validates: ids < n_nodes, no self-loops, weights > 0 and finite, no
  // duplicate ordered pairs. Throws DomainError otherwise.
  GlobalGraph(std::size_t n_nodes, std::vector<Edge> edges);

  std::size_t n_nodes() const noexcept { return n_nodes_; }
  std::size_t n_edges() const noexcept { return out_.size(); }

  // Index of the padding token used by walks and the embedding table.
  NodeId pad_id() const noexcept { return static_cast<NodeId>(n_nodes_); }

  bool contains(NodeId v) const noexcept { return v < n_nodes_; }

  std::span<const Neighbor> out_neighbors(NodeId v) const;
  std::span<const Neighbor> in_neighbors(NodeId v) const;

  std::size_t out_degree(NodeId v) const { return out_neighbors(v).size(); }
  std::size_t in_degree(NodeId v) const { return in_neighbors(v).size(); }

  // Returns 0 when the edge is absent.
  double weight(NodeId src, NodeId dst) const;
  bool has_edge(NodeId src, NodeId dst) const { return weight(src, dst) > 0.0; }

  // All edges ordered by (src, dst).
  std::vector<Edge> edges() const;

 private:
  void check_node(NodeId v) const;

  std::size_t n_nodes_ = 0;
  std::vector<std::size_t> out_offsets_{0};
  std::vector<Neighbor> out_;
  std::vector<std::size_t> in_offsets_{0};
  std::vector<Neighbor> in_;
};

// Streams `src<TAB>dst<TAB>weight` lines. An optional `# nodes=<N>` header pins
// the node count, otherwise it is max id + 1. Blank lines are skipped.
GlobalGraph read_global_graph(std::istream& in);
GlobalGraph load_global_graph(const std::filesystem::path& path);
void write_global_graph(const GlobalGraph& g, std::ostream& out);

// Optional `id<TAB>label` file.
std::unordered_map<NodeId, std::string> load_node_labels(const std::filesystem::path& path);

// Subgraph induced on a cascade's adopters. Node order is the order of the
// adopter list handed to induce_cascade, which for generated data is adoption
// order.
class CascadeGraph {
 public:
  std::span<const NodeId> nodes() const noexcept { return nodes_; }
  std::span<const NodeId> roots() const noexcept { return roots_; }
  std::size_t n_nodes() const noexcept { return nodes_.size(); }
  std::size_t n_edges() const noexcept { return n_edges_; }

  bool contains(NodeId v) const { return local_.contains(v); }

  // Position of v in nodes(); throws DomainError when v is absent.
  std::size_t local_index(NodeId v) const;

  // Out-edges of the node at local index i as (local index, weight) pairs,
  // sorted by global destination id.
  struct LocalNeighbor {
    std::uint32_t local;
    double weight;
  };
  std::span<const LocalNeighbor> local_out(std::size_t i) const {
    return {out_.data() + out_offsets_[i], out_offsets_[i + 1] - out_offsets_[i]};
  }
  std::size_t local_in_degree(std::size_t i) const { return in_degree_[i]; }

  std::size_t out_degree(NodeId v) const { return local_out(local_index(v)).size(); }
  std::size_t in_degree(NodeId v) const { return in_degree_[local_index(v)]; }

  // Edges with global ids, ordered by (src, dst).
  std::vector<Edge> edges() const;

 private:
  friend CascadeGraph induce_cascade(const GlobalGraph&, std::span<const NodeId>, std::span<const NodeId>);

  std::vector<NodeId> nodes_;
  std::vector<NodeId> roots_;
  std::unordered_map<NodeId, std::uint32_t> local_;
  std::vector<std::size_t> out_offsets_{0};
  std::vector<LocalNeighbor> out_;
  std::vector<std::size_t> in_degree_;
  std::size_t n_edges_ = 0;
};

// Throws DomainError for empty adopters, duplicate adopters, ids out of range,
// or roots that are not adopters.
CascadeGraph induce_cascade(const GlobalGraph& g, std::span<const NodeId> adopters, std::span<const NodeId> roots);

struct FrontierGraph {
  std::vector<NodeId> nodes;  // sorted
  std::vector<Edge> edges;    // induced among frontier nodes, ordered by (src, dst)
  // Edges between a cascade node and a frontier node, either direction.
  std::size_t boundary_edges = 0;
};

// Frontier = (in- and out-neighbors of the cascade) minus the cascade.
FrontierGraph frontier(const GlobalGraph& g, const CascadeGraph& c);

std::size_t degree(const GlobalGraph& g, NodeId v, Direction dir);
std::size_t degree(const CascadeGraph& c, NodeId v, Direction dir);

}  // namespace cascadenet
