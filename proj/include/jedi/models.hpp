#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "jedi/store.hpp"
#include "jedi/tensor.hpp"

namespace jedi {

enum class EnsembleInput { predictions, base_features, adjusted_features, adjusted_plus_predictions };

std::string_view ensemble_input_name(EnsembleInput mode);
EnsembleInput parse_ensemble_input(std::string_view name);

// Residual two-layer network over one expert segment:
//   e + Dropout(SiLU(e U + u) W + w)
// The up-projection starts at zero so the module is the identity at init.
struct AdjustmentModule {
  ParamTensor down_w;  // d_i x m
  ParamTensor down_b;  // 1 x m
  ParamTensor up_w;    // m x d_i
  ParamTensor up_b;    // 1 x d_i
  double keep_probability = 0.25;

  std::size_t width() const noexcept { return down_w.rows(); }
  std::size_t hidden() const noexcept { return down_w.cols(); }
};

struct StudentModel {
  std::size_t dataset_id = 0;
  AdjustmentModule adjustment;
  ParamTensor head_w;  // d_i x C_i
  ParamTensor head_b;  // 1 x C_i

  std::size_t num_classes() const noexcept { return head_w.cols(); }
};

struct TeacherEnsemble {
  std::size_t dataset_id = 0;
  double dropout_rate = 0.0;
  ParamTensor meta_w;  // input_width x C_i
  ParamTensor meta_b;  // 1 x C_i

  std::size_t num_classes() const noexcept { return meta_w.cols(); }
};

// Frozen linear head of an initial expert, over that expert's own segment.
struct ExpertHead {
  Tensor2 weight;  // d_i x C_i
  Tensor2 bias;    // 1 x C_i
};

struct InitPolicy {
  std::size_t hidden_width = 256;
  double adjust_dropout = 0.75;
  double teacher_k = 10.0;
  bool warm_start = true;  // seed student heads from expert heads when given
};

struct ModelSet {
  EnsembleInput mode = EnsembleInput::adjusted_features;
  std::vector<std::size_t> segment_widths;
  std::vector<std::size_t> class_counts;
  std::vector<StudentModel> students;
  std::vector<TeacherEnsemble> teachers;

  std::size_t num_experts() const noexcept { return students.size(); }
  std::size_t total_width() const;
  std::vector<ParamTensor*> parameters();
  std::vector<const ParamTensor*> parameters() const;
  void zero_grad();
};

// max(0, 1 - k * C / d).
double teacher_dropout_rate(std::size_t num_classes, std::size_t d, double k);

// Width of the assembled teacher input for `mode`.
std::size_t ensemble_input_width(EnsembleInput mode, const std::vector<std::size_t>& segment_widths,
                                 const std::vector<std::size_t>& class_counts);

// Builds students and teachers for the expert datasets of `store`. Adjustment
// up-projections are zero; down-projections, heads, and meta-classifiers use
// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) from the "init" stream.
ModelSet init_models(const std::vector<DatasetSpec>& experts, std::uint64_t init_seed,
                     const InitPolicy& policy, EnsembleInput mode,
                     const std::vector<ExpertHead>* pretrained = nullptr);

// Single-sample forms of the batch graph. Dropout is drawn from `rng` only in
// train mode.
std::vector<double> adjust(std::span<const double> e, const AdjustmentModule& module,
                           bool train_mode = false, const Rng* rng = nullptr);
std::vector<double> student_forward(const SampleRecord& record, const EmbeddingStore& store,
                                    const StudentModel& student);
std::vector<double> teacher_forward(const SampleRecord& record, const EmbeddingStore& store,
                                    const ModelSet& models, std::size_t teacher_id);

}  // namespace jedi
