#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "jedi/tensor.hpp"

namespace jedi {

// Fraction of rows whose label is among the k largest logits. Ties rank the
// lower class index first.
double topk_accuracy(const Tensor2& logits, std::span<const int> labels, std::size_t k);

// Non-interpolated AP per class (samples ranked by score descending, ties by
// sample index), averaged over the classes that have a positive.
double mean_average_precision(const Tensor2& scores, std::span<const int> labels);

struct MetricValues {
  double acc1 = 0.0;
  double acc5 = 0.0;
  double map = 0.0;
  std::size_t count = 0;

  friend bool operator==(const MetricValues&, const MetricValues&) = default;
};

MetricValues evaluate_logits(const Tensor2& logits, std::span<const int> labels);

// model is one of "expert", "student", "teacher".
struct MetricKey {
  std::string model;
  std::size_t dataset = 0;
  std::string split;

  friend auto operator<=>(const MetricKey&, const MetricKey&) = default;
};

// Metrics of every (model, dataset, split) after one epoch. Epoch -1 holds the
// state before any training.
struct MetricsSnapshot {
  int epoch = -1;
  std::uint64_t config_hash = 0;
  std::map<MetricKey, MetricValues> values;
  // Batch-mean task losses averaged over the epoch's batches; empty at epoch -1.
  std::vector<double> student_cls, teacher_cls, kd;
  double loss = 0.0;
  std::size_t skipped_samples = 0;

  friend bool operator==(const MetricsSnapshot&, const MetricsSnapshot&) = default;
};

struct MetricsReport {
  std::vector<std::string> dataset_names;
  std::uint64_t config_hash = 0;
  MetricsSnapshot final_snapshot;
  std::vector<MetricsSnapshot> history;

  const MetricValues* find(const std::string& model, std::size_t dataset,
                           const std::string& split) const;
};

// Checks every snapshot shares one config hash and that acc@1 <= acc@5 and all
// values lie in [0, 1]; throws ReportError otherwise.
MetricsReport assemble_report(std::vector<MetricsSnapshot> snapshots,
                              std::vector<std::string> dataset_names);

}  // namespace jedi
