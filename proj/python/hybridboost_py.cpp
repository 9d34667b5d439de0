#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hybridboost/classifiers.hpp"
#include "hybridboost/dataset.hpp"
#include "hybridboost/errors.hpp"
#include "hybridboost/fusion.hpp"
#include "hybridboost/hog.hpp"
#include "hybridboost/metrics.hpp"
#include "hybridboost/pipeline.hpp"

namespace py = pybind11;
using namespace hybridboost;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-D array");
  const auto r = a.unchecked<2>();
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  for (py::ssize_t i = 0; i < a.shape(0); ++i)
    for (py::ssize_t j = 0; j < a.shape(1); ++j) m(i, j) = r(i, j);
  return m;
}

Array from_matrix(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

Array from_vector(const std::vector<double>& v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

data::GrayImage to_image(const Array& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-D (height, width) image");
  const std::size_t h = a.shape(0), w = a.shape(1);
  return data::GrayImage(w, h, std::vector<double>(a.data(), a.data() + w * h));
}

FeatureMatrix to_features(const Array& X, const std::vector<int>& labels) {
  FeatureMatrix f;
  f.values = to_matrix(X);
  f.labels = labels;
  if (f.labels.empty()) f.labels.assign(f.n(), 0);
  return f;
}

py::dict report_dict(const metrics::MetricReport& r) {
  py::dict d;
  d["accuracy"] = r.accuracy;
  d["recall"] = r.recall;
  d["precision"] = r.precision;
  d["f1"] = r.f1;
  d["mcc"] = r.mcc;
  d["mode"] = metrics::mode_name(r.mode);
  d["degenerate"] = r.degenerate;
  return d;
}

py::object json_to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of hybridboost.";
  m.attr("__version__") = HYBRIDBOOST_VERSION;

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<ConvergenceError>(m, "ConvergenceError", base.ptr());

  m.def(
      "synth_dataset",
      [](const std::string& kind, std::size_t n_per_class, std::size_t size, std::uint64_t seed,
         double noise) {
        const data::Dataset ds = data::synth_dataset(data::parse_synth_kind(kind), n_per_class, size, seed, noise);
        Array images({ds.size(), size, size});
        double* out = images.mutable_data();
        for (const auto& img : ds.images) out = std::copy(img.pixels.begin(), img.pixels.end(), out);
        return py::make_tuple(images, ds.labels, ds.class_names);
      },
      py::arg("kind"), py::arg("n_per_class"), py::arg("size") = 64, py::arg("seed") = 0,
      py::arg("noise") = 0.05, "Returns (images[N,H,W], labels, class_names).");

  m.def(
      "hog_descriptor",
      [](const Array& image, std::size_t cell_size, std::size_t block_cells, std::size_t bins, double clip) {
        hog::HogConfig c;
        c.cell_size = cell_size;
        c.block_cells = block_cells;
        c.bins = bins;
        c.l2hys_clip = clip;
        return from_vector(hog::hog_descriptor(to_image(image), c).values);
      },
      py::arg("image"), py::arg("cell_size") = 8, py::arg("block_cells") = 2, py::arg("bins") = 9,
      py::arg("clip") = 0.2);

  m.def(
      "confusion_counts",
      [](const std::vector<int>& y_true, const std::vector<int>& y_pred, int positive) {
        const auto c = metrics::confusion_counts(y_true, y_pred, positive);
        return py::dict(py::arg("tp") = c.tp, py::arg("tn") = c.tn, py::arg("fp") = c.fp, py::arg("fn") = c.fn);
      },
      py::arg("y_true"), py::arg("y_pred"), py::arg("positive_label") = 1);

  m.def(
      "binary_metrics",
      [](std::size_t tp, std::size_t tn, std::size_t fp, std::size_t fn, bool paper_literal) {
        return report_dict(metrics::binary_metrics(
            {tp, tn, fp, fn}, paper_literal ? metrics::MetricMode::paper_literal : metrics::MetricMode::standard));
      },
      py::arg("tp"), py::arg("tn"), py::arg("fp"), py::arg("fn"), py::arg("paper_literal") = false);

  m.def(
      "ranking_curve",
      [](const std::vector<double>& scores, const std::vector<int>& y_true, const std::string& kind) {
        const auto k = kind == "pr" ? metrics::CurveKind::pr : metrics::CurveKind::roc;
        const auto c = metrics::ranking_curve(scores, y_true, k);
        Array pts({c.points.size(), std::size_t{2}});
        for (std::size_t i = 0; i < c.points.size(); ++i) {
          pts.mutable_at(i, 0) = c.points[i].first;
          pts.mutable_at(i, 1) = c.points[i].second;
        }
        return py::make_tuple(pts, c.auc);
      },
      py::arg("scores"), py::arg("y_true"), py::arg("kind") = "roc", "Returns (points[K,2], auc).");

  py::class_<clf::SvmTrainResult>(m, "SvmModel")
      .def_property_readonly("alphas", [](const clf::SvmTrainResult& r) { return from_vector(r.alphas); })
      .def_property_readonly("bias", [](const clf::SvmTrainResult& r) { return r.model.bias; })
      .def_property_readonly("converged", [](const clf::SvmTrainResult& r) { return r.model.converged; })
      .def_property_readonly("iterations", [](const clf::SvmTrainResult& r) { return r.iterations; })
      .def("decision", [](const clf::SvmTrainResult& r, const Array& X) {
        return from_vector(clf::svm_decision(r.model, to_matrix(X)));
      });

  m.def(
      "svm_train",
      [](const Array& X, const std::vector<int>& y, const std::string& kernel, double C, int degree,
         double gamma, double tol) {
        clf::SvmConfig cfg;
        cfg.kernel.kind = clf::parse_kernel(kernel);
        cfg.kernel.degree = degree;
        cfg.kernel.gamma = gamma;
        cfg.C = C;
        cfg.tol = tol;
        return clf::svm_train_binary(to_matrix(X), y, cfg);
      },
      py::arg("X"), py::arg("y"), py::arg("kernel") = "linear", py::arg("C") = 1.0, py::arg("degree") = 2,
      py::arg("gamma") = 0.0, py::arg("tol") = 1e-3, "Binary SVM on labels in {-1, +1}.");

  m.def(
      "pca",
      [](const Array& X, std::size_t k) {
        const auto p = fusion::pca_top_k(to_features(X, {}), k);
        py::dict d;
        d["components"] = from_matrix(p.components);
        d["explained_variance"] = from_vector(p.explained_variance);
        d["projections"] = from_matrix(p.projections);
        d["total_variance"] = p.total_variance;
        return d;
      },
      py::arg("X"), py::arg("k") = 2);

  m.def(
      "stratified_split",
      [](const std::vector<int>& labels, double train_fraction, std::uint64_t seed, double validation_fraction) {
        const auto s = data::stratified_split(labels, train_fraction, seed, validation_fraction);
        return py::make_tuple(s.train, s.validation, s.test);
      },
      py::arg("labels"), py::arg("train_fraction"), py::arg("seed"), py::arg("validation_fraction") = 0.1);

  m.def(
      "run_experiment",
      [](const std::string& config_json, const std::string& phase, const std::string& out_dir) {
        const auto cfg = pipeline::parse_config(nlohmann::json::parse(config_json),
                                                phase == "classify" ? pipeline::Phase::classify
                                                                    : pipeline::Phase::detect,
                                                std::nullopt);
        pipeline::RunResult r;
        {
          py::gil_scoped_release release;
          r = pipeline::run_experiment(cfg, out_dir);
          pipeline::write_report(r, out_dir);
        }
        py::dict d;
        d["body"] = json_to_py(r.body);
        d["body_sha256"] = r.body_sha256;
        return d;
      },
      py::arg("config_json"), py::arg("phase"), py::arg("out_dir"));
}
