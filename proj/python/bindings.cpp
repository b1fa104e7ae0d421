#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "jedi/error.hpp"
#include "jedi/kvdoc.hpp"
#include "jedi/losses.hpp"
#include "jedi/metrics.hpp"
#include "jedi/models.hpp"
#include "jedi/report.hpp"
#include "jedi/store.hpp"
#include "jedi/synth.hpp"
#include "jedi/trainer.hpp"

namespace py = pybind11;
using namespace jedi;

namespace {

KvDoc doc_from(const std::map<std::string, py::object>& settings) {
  KvDoc doc;
  for (const auto& [key, value] : settings) {
    // bool before int: Python bools are ints.
    if (py::isinstance<py::bool_>(value)) {
      doc.set(key, value.cast<bool>() ? "true" : "false");
    } else if (py::isinstance<py::list>(value) || py::isinstance<py::tuple>(value)) {
      std::string joined;
      for (const auto& item : value) joined += (joined.empty() ? "" : ",") + py::str(item).cast<std::string>();
      doc.set(key, joined);
    } else {
      doc.set(key, py::str(value).cast<std::string>());
    }
  }
  return doc;
}

py::dict metrics_dict(const MetricsReport& report) {
  py::dict out;
  for (const auto& [key, v] : report.final_snapshot.values) {
    py::dict m;
    m["acc1"] = v.acc1;
    m["acc5"] = v.acc5;
    m["map"] = v.map;
    m["count"] = v.count;
    out[py::make_tuple(key.model, report.dataset_names[key.dataset], key.split)] = m;
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_jedi, m) {
  m.doc() = "Joint student-teacher distillation over cached expert embeddings";

  static py::exception<Error> error(m, "JediError");
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<StoreError>(m, "StoreError", error.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", error.ptr());
  py::register_exception<MetricError>(m, "MetricError", error.ptr());

  m.def("teacher_dropout_rate", &teacher_dropout_rate, py::arg("num_classes"), py::arg("d"),
        py::arg("k") = 10.0);

  m.def(
      "dataset_weight",
      [](std::size_t home, std::size_t model, const std::vector<std::uint64_t>& sizes,
         const std::string& weighting) {
        return dataset_weight(home, model, sizes, parse_weighting(weighting));
      },
      py::arg("home"), py::arg("model"), py::arg("sizes"), py::arg("weighting") = "as_printed");

  m.def(
      "cross_entropy",
      [](const std::vector<double>& logits, int label) {
        const LossGrad g = cross_entropy(logits, label);
        return py::make_tuple(g.loss, g.grad);
      },
      py::arg("logits"), py::arg("label"));

  m.def(
      "multiclass_hinge",
      [](const std::vector<double>& scores, int label) {
        const LossGrad g = multiclass_hinge(scores, label);
        return py::make_tuple(g.loss, g.grad);
      },
      py::arg("scores"), py::arg("label"));

  m.def(
      "kd_cross_entropy",
      [](const std::vector<double>& student, const std::vector<double>& teacher, double t) {
        const KdGrad g = kd_cross_entropy(student, teacher, t);
        return py::make_tuple(g.loss, g.grad_student, g.grad_teacher);
      },
      py::arg("student_logits"), py::arg("teacher_logits"), py::arg("temperature") = 1.0);

  m.def(
      "topk_accuracy",
      [](const std::vector<std::vector<double>>& logits, const std::vector<int>& labels,
         std::size_t k) { return topk_accuracy(Tensor2::from_rows(logits), labels, k); },
      py::arg("logits"), py::arg("labels"), py::arg("k"));

  m.def(
      "mean_average_precision",
      [](const std::vector<std::vector<double>>& scores, const std::vector<int>& labels) {
        return mean_average_precision(Tensor2::from_rows(scores), labels);
      },
      py::arg("scores"), py::arg("labels"));

  py::class_<EmbeddingStore>(m, "EmbeddingStore")
      .def_property_readonly("dataset_names",
                             [](const EmbeddingStore& s) {
                               std::vector<std::string> names;
                               for (const auto& d : s.manifest()) names.push_back(d.name);
                               return names;
                             })
      .def_property_readonly("num_experts", &EmbeddingStore::num_experts)
      .def_property_readonly("total_dim", &EmbeddingStore::total_dim)
      .def_property_readonly("total_records", &EmbeddingStore::total_records)
      .def(
          "count",
          [](const EmbeddingStore& s, std::size_t dataset, const std::string& split) {
            return s.count(dataset, parse_split(split));
          },
          py::arg("dataset"), py::arg("split"))
      .def(
          "features",
          [](const EmbeddingStore& s, std::size_t dataset, const std::string& split) {
            std::vector<std::vector<float>> rows;
            for (const auto& r : s.records(dataset, parse_split(split))) rows.push_back(r.features);
            return rows;
          },
          py::arg("dataset"), py::arg("split"))
      .def(
          "labels",
          [](const EmbeddingStore& s, std::size_t dataset, const std::string& split) {
            std::vector<std::optional<int>> labels;
            for (const auto& r : s.records(dataset, parse_split(split))) labels.push_back(r.label);
            return labels;
          },
          py::arg("dataset"), py::arg("split"))
      .def("__eq__", [](const EmbeddingStore& a, const EmbeddingStore& b) { return a == b; });

  m.def(
      "generate_world",
      [](const std::map<std::string, py::object>& settings) {
        return generate_world(WorldSpec::from_kv(doc_from(settings)));
      },
      py::arg("settings") = std::map<std::string, py::object>{},
      "Synthetic store from `world.*` keys; missing keys keep their defaults.");

  m.def("write_store", &write_store, py::arg("store"), py::arg("directory"));
  m.def("read_store", &read_store, py::arg("directory"));

  m.def(
      "fit",
      [](const EmbeddingStore& store, const std::map<std::string, py::object>& settings) {
        const TrainConfig config = TrainConfig::from_kv(doc_from(settings));
        FitResult r;
        {
          py::gil_scoped_release release;
          r = fit(prepare_store(store, config), config);
        }
        py::dict out;
        out["metrics"] = metrics_dict(r.report);
        out["curves_csv"] = curves_csv(curve_rows(r.report.history, r.report.dataset_names));
        out["config_hash"] = r.report.config_hash;
        return out;
      },
      py::arg("store"), py::arg("settings") = std::map<std::string, py::object>{},
      "Trains on `store` with `train.*`, `loss.*` and `model.*` keys. Returns final "
      "metrics keyed by (model, dataset, split) and the per-epoch curves as CSV.");
}
