#include "cascadenet/features.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "cascadenet/errors.hpp"
#include "cascadenet/rng.hpp"

namespace cascadenet {

const FeatureLayout& base_feature_names() {
  static const FeatureLayout names{
      "n_nodes",          "n_edges",           "edge_density",          "n_leaves",
      "mean_local_out_degree", "p90_local_out_degree", "mean_global_out_degree", "p90_global_out_degree",
      "frontier_n_nodes", "frontier_n_edges",  "frontier_boundary_edges", "open_triangles",
      "closed_triangles"};
  return names;
}

std::shared_ptr<const FeatureLayout> make_layout(const FeatureOptions& opt, std::size_t n_global_nodes) {
  auto names = std::make_shared<FeatureLayout>(base_feature_names());
  if (opt.include_identity) {
    const std::size_t n = opt.exact_identity ? n_global_nodes : opt.identity_dim;
    if (n == 0) throw DomainError("identity block needs a positive dimension");
    for (std::size_t i = 0; i < n; ++i) names->push_back((opt.exact_identity ? "id_" : "idh_") + std::to_string(i));
  }
  return names;
}

double FeatureVector::operator[](std::string_view name) const {
  for (std::size_t i = 0; i < layout->size(); ++i) {
    if ((*layout)[i] == name) return values[i];
  }
  throw DomainError("no feature named '" + std::string(name) + "'");
}

TriadCounts count_triads(const CascadeGraph& c) {
  const std::size_t n = c.n_nodes();
  std::vector<std::vector<std::uint32_t>> adj(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& nb : c.local_out(i)) {
      adj[i].push_back(nb.local);
      adj[nb.local].push_back(static_cast<std::uint32_t>(i));
    }
  }
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  std::size_t wedges = 0;
  std::size_t triangles = 0;
  for (std::size_t v = 0; v < n; ++v) {
    const std::size_t d = adj[v].size();
    wedges += d * (d - (d > 0 ? 1 : 0)) / 2;
    // Each triangle u < v < w counted once from its smallest edge (u, v).
    for (std::uint32_t w : adj[v]) {
      if (w <= v) continue;
      std::size_t i = 0;
      std::size_t j = 0;
      const auto& a = adj[v];
      const auto& b = adj[w];
      while (i < a.size() && j < b.size()) {
        if (a[i] < b[j]) {
          ++i;
        } else if (a[i] > b[j]) {
          ++j;
        } else {
          if (a[i] > w) ++triangles;
          ++i;
          ++j;
        }
      }
    }
  }
  return {wedges - 3 * triangles, triangles};
}

double percentile90(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(values.size()) - 1e-12));
  return values[std::max<std::size_t>(rank, 1) - 1];
}

FeatureVector extract_features(const CascadeGraph& c, const FrontierGraph& f, const GlobalGraph& g,
                               const std::shared_ptr<const FeatureLayout>& layout, const FeatureOptions& opt) {
  {
    const auto expected = frontier(g, c);
    if (expected.nodes != f.nodes || expected.edges.size() != f.edges.size() ||
        expected.boundary_edges != f.boundary_edges) {
      throw DomainError("frontier graph does not belong to this cascade");
    }
  }
  const std::size_t n = c.n_nodes();
  const std::size_t m = c.n_edges();
  std::vector<double> local_deg(n);
  std::vector<double> global_deg(n);
  std::size_t leaves = 0;
  for (std::size_t i = 0; i < n; ++i) {
    local_deg[i] = static_cast<double>(c.local_out(i).size());
    global_deg[i] = static_cast<double>(g.out_degree(c.nodes()[i]));
    if (c.local_in_degree(i) == 1 && c.local_out(i).empty()) ++leaves;
  }
  auto mean = [](const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  const auto triads = count_triads(c);
  FeatureVector fv;
  fv.layout = layout;
  fv.values.assign(layout->size(), 0.0);
  const double density = n >= 2 ? static_cast<double>(m) / (static_cast<double>(n) * static_cast<double>(n - 1)) : 0.0;
  const double base[] = {static_cast<double>(n),
                         static_cast<double>(m),
                         density,
                         static_cast<double>(leaves),
                         mean(local_deg),
                         percentile90(local_deg),
                         mean(global_deg),
                         percentile90(global_deg),
                         static_cast<double>(f.nodes.size()),
                         static_cast<double>(f.edges.size()),
                         static_cast<double>(f.boundary_edges),
                         static_cast<double>(triads.open),
                         static_cast<double>(triads.closed)};
  const std::size_t n_base = base_feature_names().size();
  if (layout->size() < n_base) throw DomainError("feature layout is shorter than the structural block");
  std::copy(std::begin(base), std::end(base), fv.values.begin());
  const std::size_t id_dim = layout->size() - n_base;
  if (opt.include_identity && id_dim > 0) {
    for (NodeId v : c.nodes()) {
      const std::size_t slot = opt.exact_identity ? v : splitmix64_mix(v) % id_dim;
      if (slot >= id_dim) throw DomainError("node id outside identity block");
      fv.values[n_base + slot] = 1.0;
    }
  }
  return fv;
}

void write_features_csv(std::ostream& out, const std::vector<std::string>& ids, const std::vector<FeatureVector>& rows) {
  if (rows.empty()) return;
  out << "id";
  for (const auto& name : *rows.front().layout) out << ',' << name;
  out << '\n';
  char buf[64];
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out << ids[r];
    for (double v : rows[r].values) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out << ',' << std::string_view(buf, static_cast<std::size_t>(end - buf));
    }
    out << '\n';
  }
}

RidgeModel fit_ridge(const std::vector<FeatureVector>& X, const std::vector<double>& y, double l2,
                     const RidgeOptions& opt) {
  if (X.empty() || X.size() != y.size()) throw DomainError("ridge: need equal, non-zero numbers of rows and labels");
  if (!(l2 >= 0.0)) throw DomainError("ridge: l2 must be non-negative");
  const auto& layout = X.front().layout;
  for (const auto& row : X) {
    if (row.layout != layout && *row.layout != *layout) throw DomainError("ridge: rows use different feature layouts");
  }
  const std::size_t n = X.size();
  const std::size_t d = layout->size();

  RidgeModel model;
  model.layout = layout;
  model.l2 = l2;
  model.feature_mean.assign(d, 0.0);
  model.feature_scale.assign(d, 1.0);
  double y_mean = 0.0;
  if (opt.fit_intercept) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) model.feature_mean[j] += X[i].values[j];
      y_mean += y[i];
    }
    for (double& v : model.feature_mean) v /= static_cast<double>(n);
    y_mean /= static_cast<double>(n);
  }
  std::vector<std::size_t> active;
  for (std::size_t j = 0; j < d; ++j) {
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = X[i].values[j] - model.feature_mean[j];
      ss += c * c;
    }
    if (ss == 0.0) {
      model.feature_scale[j] = 0.0;
      continue;
    }
    if (opt.standardize) model.feature_scale[j] = std::sqrt(ss / static_cast<double>(n));
    active.push_back(j);
  }

  model.weights.assign(d, 0.0);
  model.bias = y_mean;
  if (active.empty()) return model;

  const auto p = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd Z(static_cast<Eigen::Index>(n), p);
  Eigen::VectorXd t(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < p; ++k) {
      const std::size_t j = active[static_cast<std::size_t>(k)];
      Z(static_cast<Eigen::Index>(i), k) = (X[i].values[j] - model.feature_mean[j]) / model.feature_scale[j];
    }
    t(static_cast<Eigen::Index>(i)) = y[i] - y_mean;
  }
  Eigen::MatrixXd gram = Z.transpose() * Z;
  gram.diagonal().array() += l2;
  const Eigen::VectorXd rhs = Z.transpose() * t;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  const Eigen::VectorXd pivots = ldlt.vectorD();
  const bool degenerate = pivots.size() > 0 && !(pivots.minCoeff() > 1e-12 * pivots.cwiseAbs().maxCoeff());
  if (ldlt.info() != Eigen::Success || degenerate || ldlt.rcond() < 1e-13) {
    throw NumericalError("ridge: normal equations are singular; use l2 > 0");
  }
  const Eigen::VectorXd w = ldlt.solve(rhs);
  for (Eigen::Index k = 0; k < p; ++k) {
    const std::size_t j = active[static_cast<std::size_t>(k)];
    model.weights[j] = w(k) / model.feature_scale[j];
    model.bias -= model.weights[j] * model.feature_mean[j];
  }
  return model;
}

double predict_ridge(const RidgeModel& m, const FeatureVector& x) {
  if (!x.layout || (x.layout != m.layout && *x.layout != *m.layout)) {
    throw DomainError("ridge: feature layout does not match the fitted model");
  }
  double acc = m.bias;
  for (std::size_t j = 0; j < m.weights.size(); ++j) acc += m.weights[j] * x.values[j];
  return acc;
}

}  // namespace cascadenet
