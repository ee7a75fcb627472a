#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "debris/backbone.hpp"
#include "debris/classifiers/model.hpp"
#include "debris/cli.hpp"
#include "debris/dataset.hpp"
#include "debris/evaluation.hpp"
#include "debris/features.hpp"
#include "debris/preprocess.hpp"
#include "debris/report.hpp"

namespace py = pybind11;
using namespace debris;

namespace {

// Rows of a numpy matrix as a labelled Train-split feature matrix.
FeatureMatrix as_features(const Matrix& X, const std::vector<int>& labels, const std::string& standardizer_hash) {
  FeatureMatrix f;
  f.X = X;
  f.labels = labels;
  f.record_ids.resize(static_cast<std::size_t>(X.rows()));
  for (std::size_t i = 0; i < f.record_ids.size(); ++i) f.record_ids[i] = static_cast<std::int64_t>(i);
  f.splits.assign(f.record_ids.size(), Split::Train);
  f.standardizer_hash = standardizer_hash;
  return f;
}

py::dict metrics_dict(const Metrics& m) {
  py::dict d;
  d["accuracy"] = m.accuracy;
  d["macro_f1"] = m.macro_f1;
  d["correct"] = m.correct;
  d["total"] = m.total;
  d["confusion"] = m.confusion;
  d["row_percent_tenths"] = m.row_percent_tenths;
  std::vector<double> precision, recall, f1;
  for (const auto& c : m.per_class) {
    precision.push_back(c.precision);
    recall.push_back(c.recall);
    f1.push_back(c.f1);
  }
  d["precision"] = precision;
  d["recall"] = recall;
  d["f1"] = f1;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Debris classification pipeline core";

  static py::exception<Error> debris_error(m, "DebrisError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object err = debris_error;
      py::object instance = err(e.what());
      instance.attr("kind") = std::string(to_string(e.kind()));
      PyErr_SetObject(debris_error.ptr(), instance.ptr());
    }
  });

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "debris");
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a debris command line; returns (exit_code, stdout, stderr).");

  m.def(
      "split_counts",
      [](std::int64_t n, const std::string& train, const std::string& validation, const std::string& test) {
        SplitFractions f{Fraction::parse(train), Fraction::parse(validation), Fraction::parse(test)};
        f.validate();
        const auto c = split_counts(n, f);
        return py::make_tuple(c.train, c.validation, c.test);
      },
      py::arg("class_size"), py::arg("train") = "7/10", py::arg("validation") = "3/20", py::arg("test") = "3/20");

  m.def(
      "stratified_kfold",
      [](const std::vector<int>& labels, int folds, std::uint64_t seed) { return stratified_kfold(labels, folds, seed); },
      py::arg("labels"), py::arg("folds"), py::arg("seed"), "Fold index per row, balanced within each class.");

  m.def(
      "compute_metrics",
      [](const std::vector<int>& y_true, const std::vector<int>& y_pred, int num_classes) {
        return metrics_dict(compute_metrics(y_true, y_pred, num_classes));
      },
      py::arg("y_true"), py::arg("y_pred"), py::arg("num_classes"));

  m.def("format_fixed", &format_fixed, py::arg("value"), py::arg("decimals"));
  m.def(
      "render_percent_row", [](const std::vector<long>& tenths) { return render_percent_row(tenths); },
      py::arg("tenths"));
  m.def(
      "render_results_table",
      [](const std::vector<std::tuple<std::string, double, double>>& rows, bool sort) {
        std::vector<ResultRow> out;
        for (const auto& [key, acc, f1] : rows) out.push_back({parse_family(key), acc, f1});
        if (sort) sort_result_rows(out);
        return render_results_table(out);
      },
      py::arg("rows"), py::arg("sort") = true, "rows: (family_key, accuracy %, macro-F1 %)");

  py::class_<StandardizationParams>(m, "Standardizer")
      .def_static(
          "fit", [](const Matrix& X) { return fit_standardizer(as_features(X, {}, "")); }, py::arg("X"))
      .def_static("load", &load_standardizer, py::arg("path"))
      .def("save", [](const StandardizationParams& p, const std::filesystem::path& path) { save_standardizer(p, path); })
      .def("transform",
           [](const StandardizationParams& p, const Matrix& X) { return apply_standardizer(p, as_features(X, {}, "")).X; })
      .def_property_readonly("mean", [](const StandardizationParams& p) { return p.mu; })
      .def_property_readonly("std", [](const StandardizationParams& p) { return p.sigma; })
      .def_readonly("constant_dims", &StandardizationParams::constant_dims)
      .def_property_readonly("hash", &StandardizationParams::hash);

  py::class_<TrainedClassifier>(m, "Model")
      .def_property_readonly("family", [](const TrainedClassifier& c) { return std::string(family_key(c.spec.family)); })
      .def_property_readonly("hyperparameters", [](const TrainedClassifier& c) { return c.spec.hyperparameters; })
      .def_readonly("num_classes", &TrainedClassifier::num_classes)
      .def_readonly("dims", &TrainedClassifier::dims)
      .def_readonly("class_names", &TrainedClassifier::class_names)
      .def_readonly("standardizer_hash", &TrainedClassifier::standardizer_hash)
      .def(
          "predict",
          [](const TrainedClassifier& c, const Matrix& X, const std::string& standardizer_hash) {
            const auto h = standardizer_hash.empty() ? c.standardizer_hash : standardizer_hash;
            return predict(c, as_features(X, {}, h));
          },
          py::arg("X"), py::arg("standardizer_hash") = "")
      .def("save", [](const TrainedClassifier& c, const std::filesystem::path& path) { save_model(c, path); })
      .def("__repr__", [](const TrainedClassifier& c) {
        return "<debris.Model " + std::string(family_key(c.spec.family)) + " " + c.spec.describe() + ">";
      });

  m.def(
      "fit",
      [](const std::string& family, const Matrix& X, const std::vector<int>& y,
         const std::map<std::string, double>& hyperparameters, std::uint64_t seed, const std::string& standardizer_hash,
         int jobs) {
        ClassifierSpec spec = ClassifierSpec::defaults(parse_family(family), seed);
        for (const auto& [k, v] : hyperparameters) spec.hyperparameters[k] = v;
        FitOptions opts;
        opts.allow_unstandardized = standardizer_hash.empty();
        opts.jobs = jobs;
        const auto train = as_features(X, y, standardizer_hash);
        py::gil_scoped_release release;
        return fit(spec, train, opts);
      },
      py::arg("family"), py::arg("X"), py::arg("y"), py::arg("hyperparameters") = std::map<std::string, double>{},
      py::arg("seed") = 0, py::arg("standardizer_hash") = "", py::arg("jobs") = 1,
      "Train one classifier. Without a standardizer hash the input is accepted as-is.");

  m.def("load_model", &load_model, py::arg("path"));
  m.def("families", [] {
    std::vector<std::string> keys;
    for (Family f : kAllFamilies) keys.emplace_back(family_key(f));
    return keys;
  });

  m.def(
      "embed",
      [](const std::vector<std::filesystem::path>& images, const std::filesystem::path& backbone, int jobs) {
        const auto handle = load_backbone(backbone);
        std::vector<ImageTensor> tensors;
        for (const auto& p : images) tensors.push_back(preprocess_image(p));
        py::gil_scoped_release release;
        return embed_batch(handle, tensors, jobs).X;
      },
      py::arg("images"), py::arg("backbone"), py::arg("jobs") = 1,
      "Raw pooled embeddings, one row per image (no standardization).");

  m.def(
      "parity_error",
      [](const std::filesystem::path& backbone, const std::filesystem::path& fixture, double floor) {
        return parity_max_relative_error(load_backbone(backbone), load_parity_fixture(fixture), floor);
      },
      py::arg("backbone"), py::arg("fixture"), py::arg("floor") = 1e-3,
      "Largest relative deviation of the backbone's embeddings from a parity fixture.");
}
