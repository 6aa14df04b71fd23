#pragma once

// Hand-crafted structural features for the linear baseline, and a
// closed-form ridge regressor over them.

#include <cstddef>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "cascadenet/graph.hpp"

namespace cascadenet {

struct FeatureOptions {
  bool include_identity = false;
  bool exact_identity = false;  // one indicator per global node instead of hashing
  std::size_t identity_dim = 4096;
};

using FeatureLayout = std::vector<std::string>;

// Names of the structural features, in layout order.
const FeatureLayout& base_feature_names();
std::shared_ptr<const FeatureLayout> make_layout(const FeatureOptions& opt, std::size_t n_global_nodes);

struct FeatureVector {
  std::shared_ptr<const FeatureLayout> layout;
  std::vector<double> values;

  double operator[](std::string_view name) const;
};

struct TriadCounts {
  std::size_t open = 0;    // connected triples that do not close
  std::size_t closed = 0;  // triangles
};

// Counted on the undirected simple projection of the cascade.
TriadCounts count_triads(const CascadeGraph& c);

// Throws DomainError if `f` is not the frontier of `c` in `g`.
FeatureVector extract_features(const CascadeGraph& c, const FrontierGraph& f, const GlobalGraph& g,
                               const std::shared_ptr<const FeatureLayout>& layout, const FeatureOptions& opt);

// Nearest-rank 90th percentile: element ceil(0.9 n) - 1 of the ascending list.
double percentile90(std::vector<double> values);

void write_features_csv(std::ostream& out, const std::vector<std::string>& ids, const std::vector<FeatureVector>& rows);

struct RidgeOptions {
  bool standardize = true;    // z-score features with training statistics
  bool fit_intercept = true;  // unpenalized bias
};

struct RidgeModel {
  std::shared_ptr<const FeatureLayout> layout;
  std::vector<double> weights;  // in raw feature units
  double bias = 0.0;
  double l2 = 0.0;
  // Training statistics; feature_scale is 0 for constant (dropped) columns.
  std::vector<double> feature_mean;
  std::vector<double> feature_scale;
};

// Solves (X~^T X~ + l2 I) w~ = X~^T y~ on the centered/standardized design
// and folds the transform back into raw-unit weights. Constant columns get
// weight 0. Throws DomainError on bad shapes and NumericalError when the
// system is singular.
RidgeModel fit_ridge(const std::vector<FeatureVector>& X, const std::vector<double>& y, double l2,
                     const RidgeOptions& opt = {});

// Throws DomainError on layout mismatch.
double predict_ridge(const RidgeModel& m, const FeatureVector& x);

}  // namespace cascadenet
