#include "cascadenet/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <string_view>
#include <tuple>
#include <unordered_set>

#include "cascadenet/errors.hpp"

namespace cascadenet {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& value) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  return ec == std::errc{} && ptr == end;
}

void build_csr(std::size_t n, const std::vector<Edge>& edges, bool by_src, std::vector<std::size_t>& offsets,
               std::vector<Neighbor>& adj) {
  offsets.assign(n + 1, 0);
  for (const auto& e : edges) ++offsets[(by_src ? e.src : e.dst) + 1];
  for (std::size_t i = 0; i < n; ++i) offsets[i + 1] += offsets[i];
  adj.resize(edges.size());
  auto cursor = offsets;
  for (const auto& e : edges) {
    const NodeId key = by_src ? e.src : e.dst;
    adj[cursor[key]++] = Neighbor{by_src ? e.dst : e.src, e.weight};
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::sort(adj.begin() + static_cast<std::ptrdiff_t>(offsets[i]),
              adj.begin() + static_cast<std::ptrdiff_t>(offsets[i + 1]),
              [](const Neighbor& a, const Neighbor& b) { return a.node < b.node; });
  }
}

}  // namespace

GlobalGraph::GlobalGraph(std::size_t n_nodes, std::vector<Edge> edges) : n_nodes_(n_nodes) {
  for (const auto& e : edges) {
    if (e.src >= n_nodes || e.dst >= n_nodes) {
      throw DomainError("edge (" + std::to_string(e.src) + "," + std::to_string(e.dst) + ") references a node >= " +
                        std::to_string(n_nodes));
    }
    if (e.src == e.dst) throw DomainError("self-loop on node " + std::to_string(e.src));
    if (!(e.weight > 0.0) || !std::isfinite(e.weight)) {
      throw DomainError("edge (" + std::to_string(e.src) + "," + std::to_string(e.dst) + ") has non-positive weight");
    }
  }
  build_csr(n_nodes, edges, true, out_offsets_, out_);
  build_csr(n_nodes, edges, false, in_offsets_, in_);
  for (std::size_t v = 0; v < n_nodes; ++v) {
    for (std::size_t i = out_offsets_[v] + 1; i < out_offsets_[v + 1]; ++i) {
      if (out_[i].node == out_[i - 1].node) {
        throw DomainError("duplicate edge (" + std::to_string(v) + "," + std::to_string(out_[i].node) + ")");
      }
    }
  }
}

void GlobalGraph::check_node(NodeId v) const {
  if (v >= n_nodes_) throw DomainError("node " + std::to_string(v) + " is not in the global graph");
}

std::span<const Neighbor> GlobalGraph::out_neighbors(NodeId v) const {
  check_node(v);
  return {out_.data() + out_offsets_[v], out_offsets_[v + 1] - out_offsets_[v]};
}

std::span<const Neighbor> GlobalGraph::in_neighbors(NodeId v) const {
  check_node(v);
  return {in_.data() + in_offsets_[v], in_offsets_[v + 1] - in_offsets_[v]};
}

double GlobalGraph::weight(NodeId src, NodeId dst) const {
  const auto nbrs = out_neighbors(src);
  auto it = std::lower_bound(nbrs.begin(), nbrs.end(), dst, [](const Neighbor& n, NodeId d) { return n.node < d; });
  return (it != nbrs.end() && it->node == dst) ? it->weight : 0.0;
}

std::vector<Edge> GlobalGraph::edges() const {
  std::vector<Edge> out;
  out.reserve(out_.size());
  for (NodeId v = 0; v < n_nodes_; ++v) {
    for (const auto& nb : out_neighbors(v)) out.push_back({v, nb.node, nb.weight});
  }
  return out;
}

GlobalGraph read_global_graph(std::istream& in) {
  struct Parsed {
    Edge edge;
    std::size_t line;
  };
  std::vector<Parsed> parsed;
  std::size_t pinned_nodes = 0;
  bool pinned = false;
  std::size_t max_id_plus_one = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::string_view sv(line);
    if (sv.front() == '#') {
      constexpr std::string_view key = "# nodes=";
      if (sv.starts_with(key)) {
        if (!parse_number(sv.substr(key.size()), pinned_nodes)) throw ParseError("bad node-count header", lineno);
        pinned = true;
      }
      continue;
    }
    const auto cols = split_tabs(sv);
    if (cols.size() != 3) {
      throw ParseError("expected 3 tab-separated columns, got " + std::to_string(cols.size()), lineno);
    }
    std::uint64_t src = 0;
    std::uint64_t dst = 0;
    double w = 0.0;
    if (!parse_number(cols[0], src) || !parse_number(cols[1], dst) || !parse_number(cols[2], w)) {
      throw ParseError("non-numeric field", lineno);
    }
    if (src > UINT32_MAX - 1 || dst > UINT32_MAX - 1) throw ParseError("node id too large", lineno);
    if (!(w > 0.0) || !std::isfinite(w)) throw ParseError("weight must be positive", lineno);
    if (src == dst) throw ParseError("self-loop on node " + std::to_string(src), lineno);
    max_id_plus_one = std::max<std::size_t>(max_id_plus_one, std::max(src, dst) + 1);
    parsed.push_back({{static_cast<NodeId>(src), static_cast<NodeId>(dst), w}, lineno});
  }
  if (pinned && max_id_plus_one > pinned_nodes) {
    throw ParseError("node id " + std::to_string(max_id_plus_one - 1) + " exceeds header node count", 0);
  }
  std::sort(parsed.begin(), parsed.end(), [](const Parsed& a, const Parsed& b) {
    return std::tie(a.edge.src, a.edge.dst, a.line) < std::tie(b.edge.src, b.edge.dst, b.line);
  });
  std::vector<Edge> edges;
  edges.reserve(parsed.size());
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    if (i > 0 && parsed[i].edge.src == parsed[i - 1].edge.src && parsed[i].edge.dst == parsed[i - 1].edge.dst) {
      throw ParseError("duplicate edge (" + std::to_string(parsed[i].edge.src) + "," +
                           std::to_string(parsed[i].edge.dst) + ")",
                       parsed[i].line);
    }
    edges.push_back(parsed[i].edge);
  }
  parsed.clear();
  parsed.shrink_to_fit();
  return GlobalGraph(pinned ? pinned_nodes : max_id_plus_one, std::move(edges));
}

GlobalGraph load_global_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string(), 0);
  return read_global_graph(in);
}

void write_global_graph(const GlobalGraph& g, std::ostream& out) {
  out << "# nodes=" << g.n_nodes() << '\n';
  char buf[64];
  for (NodeId v = 0; v < g.n_nodes(); ++v) {
    for (const auto& nb : g.out_neighbors(v)) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, nb.weight);
      out << v << '\t' << nb.node << '\t' << std::string_view(buf, static_cast<std::size_t>(end - buf)) << '\n';
    }
  }
}

std::unordered_map<NodeId, std::string> load_node_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string(), 0);
  std::unordered_map<NodeId, std::string> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    NodeId id = 0;
    if (tab == std::string::npos || !parse_number(std::string_view(line).substr(0, tab), id)) {
      throw ParseError("expected id<TAB>label", lineno);
    }
    labels.emplace(id, line.substr(tab + 1));
  }
  return labels;
}

std::size_t CascadeGraph::local_index(NodeId v) const {
  auto it = local_.find(v);
  if (it == local_.end()) throw DomainError("node " + std::to_string(v) + " is not in the cascade graph");
  return it->second;
}

std::vector<Edge> CascadeGraph::edges() const {
  std::vector<Edge> out;
  out.reserve(n_edges_);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    for (const auto& nb : local_out(i)) out.push_back({nodes_[i], nodes_[nb.local], nb.weight});
  }
  std::sort(out.begin(), out.end(), [](const Edge& a, const Edge& b) { return std::tie(a.src, a.dst) < std::tie(b.src, b.dst); });
  return out;
}

CascadeGraph induce_cascade(const GlobalGraph& g, std::span<const NodeId> adopters, std::span<const NodeId> roots) {
  if (adopters.empty()) throw DomainError("cascade needs at least one adopter");
  CascadeGraph c;
  c.nodes_.assign(adopters.begin(), adopters.end());
  c.local_.reserve(adopters.size());
  for (std::size_t i = 0; i < adopters.size(); ++i) {
    if (!g.contains(adopters[i])) throw DomainError("adopter " + std::to_string(adopters[i]) + " is not in the global graph");
    if (!c.local_.emplace(adopters[i], static_cast<std::uint32_t>(i)).second) {
      throw DomainError("duplicate adopter " + std::to_string(adopters[i]));
    }
  }
  for (NodeId r : roots) {
    if (!c.local_.contains(r)) throw DomainError("root " + std::to_string(r) + " is not an adopter");
  }
  c.roots_.assign(roots.begin(), roots.end());

  c.in_degree_.assign(c.nodes_.size(), 0);
  c.out_offsets_.assign(1, 0);
  for (std::size_t i = 0; i < c.nodes_.size(); ++i) {
    for (const auto& nb : g.out_neighbors(c.nodes_[i])) {
      auto it = c.local_.find(nb.node);
      if (it == c.local_.end()) continue;
      c.out_.push_back({it->second, nb.weight});
      ++c.in_degree_[it->second];
    }
    c.out_offsets_.push_back(c.out_.size());
  }
  c.n_edges_ = c.out_.size();
  return c;
}

FrontierGraph frontier(const GlobalGraph& g, const CascadeGraph& c) {
  std::unordered_set<NodeId> seen;
  FrontierGraph f;
  for (NodeId v : c.nodes()) {
    for (const auto& nb : g.out_neighbors(v)) {
      if (c.contains(nb.node)) continue;
      ++f.boundary_edges;
      if (seen.insert(nb.node).second) f.nodes.push_back(nb.node);
    }
    for (const auto& nb : g.in_neighbors(v)) {
      if (c.contains(nb.node)) continue;
      ++f.boundary_edges;
      if (seen.insert(nb.node).second) f.nodes.push_back(nb.node);
    }
  }
  std::sort(f.nodes.begin(), f.nodes.end());
  for (NodeId v : f.nodes) {
    for (const auto& nb : g.out_neighbors(v)) {
      if (seen.contains(nb.node)) f.edges.push_back({v, nb.node, nb.weight});
    }
  }
  return f;
}

std::size_t degree(const GlobalGraph& g, NodeId v, Direction dir) {
  return dir == Direction::Out ? g.out_degree(v) : g.in_degree(v);
}

std::size_t degree(const CascadeGraph& c, NodeId v, Direction dir) {
  return dir == Direction::Out ? c.out_degree(v) : c.in_degree(v);
}

}  // namespace cascadenet
