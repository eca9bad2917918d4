#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>
#include <vector>

#include "spdsemg/analysis.hpp"
#include "spdsemg/decoders.hpp"
#include "spdsemg/error.hpp"
#include "spdsemg/geometry.hpp"
#include "spdsemg/pipeline.hpp"
#include "spdsemg/signal_graph.hpp"
#include "spdsemg/spdnet.hpp"

namespace py = pybind11;
using namespace spdsemg;

namespace {

std::vector<CholeskyPoint> points_of(const std::vector<Matrix>& factors) {
  std::vector<CholeskyPoint> out;
  out.reserve(factors.size());
  for (const Matrix& f : factors) out.emplace_back(f);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "SPD-matrix decoding of surface EMG on the log-Cholesky manifold";

  py::register_exception<Error>(m, "SpdsemgError", PyExc_ValueError);

  // Geometry on Cholesky factors (lower-triangular arrays).
  m.def("to_cholesky", [](const Matrix& spd) { return to_cholesky(SymMatrix(spd)).factor(); }, py::arg("spd"));
  m.def("from_cholesky", [](const Matrix& l) { return from_cholesky(CholeskyPoint(l)).matrix(); },
        py::arg("factor"));
  m.def("geodesic_distance",
        [](const Matrix& a, const Matrix& b) { return geodesic_distance(CholeskyPoint(a), CholeskyPoint(b)); },
        py::arg("a"), py::arg("b"));
  m.def(
      "frechet_mean",
      [](const std::vector<Matrix>& factors, std::optional<std::vector<double>> weights) {
        const auto pts = points_of(factors);
        return (weights ? frechet_mean(pts, *weights) : frechet_mean(pts)).factor();
      },
      py::arg("factors"), py::arg("weights") = py::none());
  m.def("chart_log", [](const Matrix& l) { return flatten_tangent(chart_log(CholeskyPoint(l))); },
        py::arg("factor"));
  m.def("chart_exp", [](const Vector& coords) { return chart_exp(unflatten_tangent(coords)).factor(); },
        py::arg("coords"));

  // Edge matrices.
  m.def("edge_matrix", [](const Matrix& block, bool center) { return edge_matrix(block, center).matrix(); },
        py::arg("block"), py::arg("center") = true);
  m.def("regularize", [](const Matrix& e, double eta) { return regularize(SymMatrix(e), eta).matrix(); },
        py::arg("edge"), py::arg("eta"));

  // SPD layers.
  m.def("reeig", [](const Matrix& e, double eps) { return reeig_forward(SymMatrix(e), eps).matrix(); },
        py::arg("spd"), py::arg("eps"));
  m.def("logeig", [](const Matrix& e) { return logeig_forward(SymMatrix(e)).matrix(); }, py::arg("spd"));
  m.def("bimap", [](const Matrix& e, const Matrix& w) { return bimap_forward(SymMatrix(e), StiefelParameter(w)).matrix(); },
        py::arg("spd"), py::arg("weight"));

  // Decoders.
  py::class_<MdmModel>(m, "MdmModel")
      .def_readonly("class_ids", &MdmModel::class_ids)
      .def_property_readonly("centroids",
                             [](const MdmModel& model) {
                               std::vector<Matrix> out;
                               for (const auto& c : model.centroids) out.push_back(c.factor());
                               return out;
                             })
      .def("predict", [](const MdmModel& model, const Matrix& l) { return mdm_predict(model, CholeskyPoint(l)); },
           py::arg("factor"))
      .def("scores", [](const MdmModel& model, const Matrix& l) { return mdm_scores(model, CholeskyPoint(l)); },
           py::arg("factor"));
  m.def(
      "mdm_fit",
      [](const std::vector<Matrix>& factors, const std::vector<int>& labels) {
        require(factors.size() == labels.size(), ErrorCode::InvalidInput, "mdm_fit: factors and labels differ in length");
        std::vector<LabeledPoint> train;
        for (std::size_t i = 0; i < factors.size(); ++i) train.push_back({CholeskyPoint(factors[i]), labels[i]});
        return mdm_fit(train);
      },
      py::arg("factors"), py::arg("labels"));
  m.def("pairwise_distances",
        [](const std::vector<Matrix>& factors) { return pairwise_distances(points_of(factors)).matrix(); },
        py::arg("factors"));
  py::class_<KMedoidsResult>(m, "KMedoidsResult")
      .def_readonly("assignments", &KMedoidsResult::assignments)
      .def_readonly("medoids", &KMedoidsResult::medoids)
      .def_readonly("cost_trace", &KMedoidsResult::cost_trace)
      .def_readonly("iterations", &KMedoidsResult::iterations)
      .def_property_readonly("cost", &KMedoidsResult::cost);
  m.def("k_medoids",
        [](const Matrix& distances, int k, std::uint64_t seed) { return k_medoids(DistanceMatrix(distances), k, seed); },
        py::arg("distances"), py::arg("k"), py::arg("seed") = 0);
  m.def("adjusted_rand_index",
        [](const std::vector<int>& a, const std::vector<int>& b) { return adjusted_rand_index(a, b); }, py::arg("a"),
        py::arg("b"));
  m.def("clustering_accuracy",
        [](const std::vector<int>& assignments, const std::vector<int>& labels) {
          return clustering_accuracy(assignments, labels);
        },
        py::arg("assignments"), py::arg("labels"));
  m.def("topk_accuracy",
        [](const Matrix& logits, const std::vector<int>& labels, int k) { return topk_accuracy(logits, labels, k); },
        py::arg("logits"), py::arg("labels"), py::arg("k"));

  // Experiments.
  m.def(
      "run_experiment",
      [](const std::filesystem::path& config_path, std::optional<std::uint64_t> seed) {
        ExperimentConfig config = load_config(config_path);
        if (seed) config.seed = *seed;
        return run_experiment(config).metrics_json;
      },
      py::arg("config"), py::arg("seed") = py::none(),
      "Run the experiment described by a JSON config file and return the metrics JSON text.");
  m.def("preset_names", &preset_names);
}
