// Python bindings. Structured results cross the boundary as JSON text and
// are decoded by the package's __init__.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cascadenet/cascade_gen.hpp"
#include "cascadenet/errors.hpp"
#include "cascadenet/experiment.hpp"
#include "cascadenet/features.hpp"
#include "cascadenet/walker.hpp"

namespace py = pybind11;
using namespace cascadenet;
using nlohmann::json;

namespace {

RunConfig config_from(const std::string& flat_json) {
  RunConfig rc;
  if (!flat_json.empty()) rc.merge(json::parse(flat_json));
  return rc;
}

std::vector<Edge> edges_from(const std::vector<std::tuple<NodeId, NodeId, double>>& triples) {
  std::vector<Edge> out;
  out.reserve(triples.size());
  for (const auto& [s, d, w] : triples) out.push_back({s, d, w});
  return out;
}

StartMode parse_start(const std::string& s) {
  if (s == "jump") return StartMode::Jump;
  if (s == "each") return StartMode::EachNode;
  if (s == "roots") return StartMode::RootsOnly;
  throw ConfigError("start must be jump, each or roots");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "cascade growth prediction core";

  auto base = py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<GenerationError>(m, "GenerationError", PyExc_RuntimeError);
  py::register_exception<StateError>(m, "StateError", PyExc_RuntimeError);
  (void)base;

  m.def("scale_label", &scale_label, py::arg("delta"));
  m.def("size_bucket", &size_bucket, py::arg("cascade_size"), py::arg("n_buckets"));
  m.def("attention_mass", &attention_mass, py::arg("a"), py::arg("K"), py::arg("B"));

  m.def(
      "count_triads",
      [](std::size_t n, const std::vector<std::tuple<NodeId, NodeId, double>>& edges) {
        GlobalGraph g(n, edges_from(edges));
        std::vector<NodeId> all(n);
        for (NodeId v = 0; v < n; ++v) all[v] = v;
        const auto t = count_triads(induce_cascade(g, all, {}));
        return std::make_pair(t.open, t.closed);
      },
      py::arg("n_nodes"), py::arg("edges"));

  m.def(
      "sample_paths",
      [](std::size_t n, const std::vector<std::tuple<NodeId, NodeId, double>>& edges, const std::vector<NodeId>& adopters,
         const std::vector<NodeId>& roots, std::size_t K, std::size_t T, double alpha, const std::string& scorer,
         const std::string& start, std::uint64_t seed) {
        GlobalGraph g(n, edges_from(edges));
        const auto c = induce_cascade(g, adopters, roots);
        WalkConfig w;
        w.K = K;
        w.T = T;
        w.alpha = alpha;
        w.scorer = parse_scorer(scorer);
        w.start_mode = parse_start(start);
        w.seed = seed;
        const auto paths = sample_paths(c, g, w);
        std::vector<std::vector<long long>> out(K);
        for (std::size_t k = 0; k < K; ++k)
          for (std::size_t i = 0; i < T; ++i)
            out[k].push_back(paths.at(k, i) == paths.pad() ? -1 : static_cast<long long>(paths.at(k, i)));
        return out;
      },
      py::arg("n_nodes"), py::arg("edges"), py::arg("adopters"), py::arg("roots"), py::arg("K") = 200,
      py::arg("T") = 10, py::arg("alpha") = 0.01, py::arg("scorer") = "deg", py::arg("start") = "jump",
      py::arg("seed") = 0);

  m.def(
      "fit_ridge",
      [](const std::vector<std::vector<double>>& X, const std::vector<double>& y, double l2, bool standardize,
         bool fit_intercept) {
        if (X.empty()) throw DomainError("fit_ridge: empty design");
        auto layout = std::make_shared<FeatureLayout>();
        for (std::size_t j = 0; j < X[0].size(); ++j) layout->push_back("x" + std::to_string(j));
        std::vector<FeatureVector> rows;
        for (const auto& r : X) rows.push_back({layout, r});
        const auto model = fit_ridge(rows, y, l2, {.standardize = standardize, .fit_intercept = fit_intercept});
        return std::make_pair(model.weights, model.bias);
      },
      py::arg("X"), py::arg("y"), py::arg("l2"), py::arg("standardize") = true, py::arg("fit_intercept") = true);

  m.def(
      "generate_dataset",
      [](const std::string& config, const std::filesystem::path& out_dir) {
        py::gil_scoped_release release;
        return generate_dataset(config_from(config), out_dir).dump();
      },
      py::arg("config"), py::arg("out_dir"));

  m.def(
      "train",
      [](const std::string& config, const std::filesystem::path& data_dir, std::optional<std::filesystem::path> out_dir) {
        py::gil_scoped_release release;
        const auto rc = config_from(config);
        return run_training(rc, load_dataset(data_dir), out_dir).report.dump();
      },
      py::arg("config"), py::arg("data_dir"), py::arg("out_dir") = py::none());

  m.def(
      "evaluate",
      [](const std::filesystem::path& ckpt, const std::filesystem::path& data_dir, const std::string& split,
         unsigned threads) {
        py::gil_scoped_release release;
        return evaluate_checkpoint(ckpt, load_dataset(data_dir), split, threads).dump();
      },
      py::arg("ckpt"), py::arg("data_dir"), py::arg("split") = "test", py::arg("threads") = 1);

  m.def(
      "features_baseline",
      [](const std::string& config, const std::filesystem::path& data_dir, const std::vector<double>& l2_grid) {
        py::gil_scoped_release release;
        BaselineOptions opt;
        opt.l2_grid = l2_grid;
        return run_features_baseline(config_from(config), load_dataset(data_dir), opt).dump();
      },
      py::arg("config"), py::arg("data_dir"), py::arg("l2_grid") = std::vector<double>{});
}
