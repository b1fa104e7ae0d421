#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "jedi/metrics.hpp"

namespace jedi {

// One line of the curves file: epoch,model,dataset,split,metric,value.
// Loss terms use model "loss" and split "train"; the epoch -1 rows of a run
// without training describe the initial experts.
struct CurveRow {
  int epoch = 0;
  std::string model;
  std::string dataset;
  std::string split;
  std::string metric;
  double value = 0.0;

  friend bool operator==(const CurveRow&, const CurveRow&) = default;
};

inline constexpr const char* kCurvesHeader = "epoch,model,dataset,split,metric,value";

std::vector<CurveRow> curve_rows(const std::vector<MetricsSnapshot>& history,
                                 const std::vector<std::string>& dataset_names);
std::string curves_csv(const std::vector<CurveRow>& rows);
void write_curves_csv(const std::filesystem::path& path, const std::vector<CurveRow>& rows);
// Throws ReportError naming the 1-based line of the first malformed row.
std::vector<CurveRow> parse_curves_csv(const std::string& text, const std::string& origin);
std::vector<CurveRow> read_curves_csv(const std::filesystem::path& path);

// Final metric values keyed by (model, dataset name, split): the rows of the
// largest epoch.
struct FinalTable {
  std::vector<std::string> datasets;  // first-seen order
  std::map<std::tuple<std::string, std::string, std::string>, MetricValues> values;
  int epoch = -1;
};

FinalTable final_table(const std::vector<CurveRow>& rows);
FinalTable final_table(const MetricsReport& report);

// Rows "Initial Experts", "Students", "Teachers" (those present); one column
// group per dataset with acc@1, acc@5 and mAP in percent.
std::string render_table(const FinalTable& table, const std::string& split = "test");

// Machine-readable summary: <model>.<dataset>.<split>.<metric> = value.
std::string report_kv(const FinalTable& table);

// Accuracy-vs-epoch chart for one dataset: student and teacher lines and the
// initial expert as a horizontal baseline.
std::string render_svg(const std::vector<CurveRow>& rows, const std::string& dataset,
                       const std::string& split = "test", const std::string& metric = "acc1");

// Writes table.txt, report.kv and one curves_<dataset>.svg per dataset.
void write_run_report(const std::filesystem::path& dir, const std::vector<CurveRow>& rows);

}  // namespace jedi
