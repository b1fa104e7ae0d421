#include "jedi/ablation.hpp"

#include <cstdio>
#include <iostream>
#include <map>

#include "jedi/error.hpp"
#include "jedi/synth.hpp"

namespace jedi {

const std::vector<AblationCell>& ablation_cells() {
  static const std::vector<AblationCell> cells{
      {"predictions", "Predictions", EnsembleInput::predictions, DistillScenario::all_datasets},
      {"base_features", "Base Features", EnsembleInput::base_features,
       DistillScenario::all_datasets},
      {"adjusted_features", "Adjusted Features", EnsembleInput::adjusted_features,
       DistillScenario::all_datasets},
      {"adjusted_features_plus_predictions", "Adjusted Features + Predictions",
       EnsembleInput::adjusted_plus_predictions, DistillScenario::all_datasets},
      {"no_distillation", "No Distillation", EnsembleInput::adjusted_features,
       DistillScenario::none},
      {"single_dataset", "Single Dataset", EnsembleInput::adjusted_features,
       DistillScenario::single_dataset},
      {"external_pool", "External Pool", EnsembleInput::adjusted_features,
       DistillScenario::external_pool},
      {"all_datasets", "All Datasets", EnsembleInput::adjusted_features,
       DistillScenario::all_datasets},
  };
  return cells;
}

AblationCell parse_ablation_cell(std::string_view name) {
  std::string valid;
  for (const AblationCell& c : ablation_cells()) {
    if (c.name == name) return c;
    valid += (valid.empty() ? "" : ", ") + c.name;
  }
  throw ConfigError("ablate.grid", "unknown scenario '" + std::string(name) + "' (valid: " + valid +
                                       ")");
}

AblationTable run_ablation_grid(const EmbeddingStore& store, const TrainConfig& base,
                                const std::vector<AblationCell>& cells,
                                const std::vector<ExpertHead>& experts) {
  if (cells.empty()) throw ConfigError("ablate.grid", "no scenarios given");
  AblationTable table;
  const std::vector<ExpertHead> heads =
      experts.empty() ? pretrain_experts(store, {}, &std::cerr).heads : experts;
  std::map<std::pair<EnsembleInput, DistillScenario>, AblationRow> done;

  for (const AblationCell& cell : cells) {
    auto key = std::pair{cell.mode, cell.scenario};
    auto it = done.find(key);
    if (it == done.end()) {
      TrainConfig config = base;
      config.ensemble_input = cell.mode;
      config.scenario = cell.scenario;
      FitResult result = fit(store, config, heads);
      AblationRow row;
      const std::size_t n = store.num_experts();
      for (std::size_t ds = 0; ds < n; ++ds) {
        const MetricValues* s = result.report.find("student", ds, "test");
        const MetricValues* t = result.report.find("teacher", ds, "test");
        row.student_acc1.push_back(s ? s->acc1 : result.initial.values.at({"student", ds, "test"}).acc1);
        row.teacher_acc1.push_back(t ? t->acc1 : result.initial.values.at({"teacher", ds, "test"}).acc1);
      }
      if (table.expert_acc1.empty()) {
        table.dataset_names = result.report.dataset_names;
        for (std::size_t ds = 0; ds < n; ++ds) {
          table.expert_acc1.push_back(result.initial.values.at({"expert", ds, "test"}).acc1);
        }
      }
      row.initial = std::move(result.initial);
      row.history = std::move(result.history);
      it = done.emplace(key, std::move(row)).first;
    }
    AblationRow row = it->second;
    row.cell = cell;
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string render_ablation_table(const AblationTable& table) {
  auto cell = [](const std::string& s, std::size_t w) {
    return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
  };
  auto pct = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
    return std::string(buf);
  };
  const std::size_t label_w = 34, col_w = 9;
  std::string out = cell("", label_w);
  for (const std::string& d : table.dataset_names) out += "| " + cell(d, 2 * col_w);
  out += "\n" + cell("Scenario", label_w);
  for (std::size_t i = 0; i < table.dataset_names.size(); ++i) {
    out += "| " + cell("Teacher", col_w) + cell("Student", col_w);
  }
  out += "\n" + std::string(label_w + table.dataset_names.size() * (2 * col_w + 2), '-') + "\n";
  out += cell("Initial Experts", label_w);
  for (double e : table.expert_acc1) out += "| " + cell("-", col_w) + cell(pct(e), col_w);
  out += "\n";
  for (const AblationRow& row : table.rows) {
    out += cell(row.cell.label, label_w);
    for (std::size_t ds = 0; ds < row.student_acc1.size(); ++ds) {
      out += "| " + cell(pct(row.teacher_acc1[ds]), col_w) + cell(pct(row.student_acc1[ds]), col_w);
    }
    out += "\n";
  }
  return out;
}

}  // namespace jedi
