#include "jedi/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "jedi/error.hpp"

namespace jedi {

namespace {

void check_inputs(const Tensor2& m, std::span<const int> labels, const char* what) {
  if (m.rows() == 0) throw MetricError(std::string(what) + ": no samples");
  if (labels.size() != m.rows()) {
    throw DimensionError(std::string(what) + ": " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(m.rows()) + " rows");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= m.cols()) {
      throw DimensionError(std::string(what) + ": label " + std::to_string(y) + " outside [0, " +
                           std::to_string(m.cols()) + ")");
    }
  }
}

}  // namespace

double topk_accuracy(const Tensor2& logits, std::span<const int> labels, std::size_t k) {
  if (k == 0) throw MetricError("topk_accuracy: k must be at least 1");
  check_inputs(logits, labels, "topk_accuracy");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const auto y = static_cast<std::size_t>(labels[r]);
    // Classes ranked ahead of y: strictly larger, or equal with a lower index.
    std::size_t ahead = 0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (row[c] > row[y] || (row[c] == row[y] && c < y)) ++ahead;
    }
    if (ahead < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

double mean_average_precision(const Tensor2& scores, std::span<const int> labels) {
  check_inputs(scores, labels, "mean_average_precision");
  const std::size_t n = scores.rows();
  std::vector<std::size_t> order(n);
  double total = 0.0;
  std::size_t classes_with_positives = 0;
  for (std::size_t c = 0; c < scores.cols(); ++c) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores(a, c) > scores(b, c); });
    std::size_t positives = 0;
    double precision_sum = 0.0;
    for (std::size_t rank = 0; rank < n; ++rank) {
      if (labels[order[rank]] == static_cast<int>(c)) {
        ++positives;
        precision_sum += static_cast<double>(positives) / static_cast<double>(rank + 1);
      }
    }
    if (positives == 0) continue;
    total += precision_sum / static_cast<double>(positives);
    ++classes_with_positives;
  }
  if (classes_with_positives == 0) throw MetricError("mean_average_precision: no class has positives");
  return total / static_cast<double>(classes_with_positives);
}

MetricValues evaluate_logits(const Tensor2& logits, std::span<const int> labels) {
  MetricValues v;
  v.acc1 = topk_accuracy(logits, labels, 1);
  v.acc5 = topk_accuracy(logits, labels, 5);
  v.map = mean_average_precision(logits, labels);
  v.count = labels.size();
  return v;
}

const MetricValues* MetricsReport::find(const std::string& model, std::size_t dataset,
                                        const std::string& split) const {
  auto it = final_snapshot.values.find(MetricKey{model, dataset, split});
  return it == final_snapshot.values.end() ? nullptr : &it->second;
}

MetricsReport assemble_report(std::vector<MetricsSnapshot> snapshots,
                              std::vector<std::string> dataset_names) {
  if (snapshots.empty()) throw ReportError("assemble_report: no snapshots");
  MetricsReport report;
  report.config_hash = snapshots.front().config_hash;
  for (const MetricsSnapshot& s : snapshots) {
    if (s.config_hash != report.config_hash) {
      throw ReportError("assemble_report: snapshot of epoch " + std::to_string(s.epoch) +
                        " has config hash " + std::to_string(s.config_hash) + ", expected " +
                        std::to_string(report.config_hash));
    }
    for (const auto& [key, v] : s.values) {
      const std::string where = key.model + "/" + std::to_string(key.dataset) + "/" + key.split +
                                " at epoch " + std::to_string(s.epoch);
      for (double x : {v.acc1, v.acc5, v.map}) {
        if (!(x >= 0.0 && x <= 1.0)) throw ReportError("metric outside [0, 1] for " + where);
      }
      if (v.acc1 > v.acc5) throw ReportError("acc@1 exceeds acc@5 for " + where);
    }
  }
  std::stable_sort(snapshots.begin(), snapshots.end(),
                   [](const MetricsSnapshot& a, const MetricsSnapshot& b) { return a.epoch < b.epoch; });
  report.final_snapshot = snapshots.back();
  report.history = std::move(snapshots);
  report.dataset_names = std::move(dataset_names);
  return report;
}

}  // namespace jedi
