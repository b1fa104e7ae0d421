#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "jedi/trainer.hpp"

namespace jedi {

// One row of the ablation table: an ensemble input mode paired with a
// distillation scope. Input-mode rows distill on all datasets; scope rows use
// adjusted features.
struct AblationCell {
  std::string name;   // e.g. "base_features"
  std::string label;  // e.g. "Base Features"
  EnsembleInput mode = EnsembleInput::adjusted_features;
  DistillScenario scenario = DistillScenario::all_datasets;
};

const std::vector<AblationCell>& ablation_cells();
// Throws ConfigError listing the valid names.
AblationCell parse_ablation_cell(std::string_view name);

struct AblationRow {
  AblationCell cell;
  std::vector<double> teacher_acc1;  // final, test split, per dataset
  std::vector<double> student_acc1;
  MetricsSnapshot initial;
  std::vector<MetricsSnapshot> history;
};

struct AblationTable {
  std::vector<std::string> dataset_names;
  std::vector<double> expert_acc1;
  std::vector<AblationRow> rows;
};

// One fit per distinct (mode, scenario) cell, all from the same seed and the
// same pretrained experts.
AblationTable run_ablation_grid(const EmbeddingStore& store, const TrainConfig& base,
                                const std::vector<AblationCell>& cells,
                                const std::vector<ExpertHead>& experts = {});

std::string render_ablation_table(const AblationTable& table);

}  // namespace jedi
