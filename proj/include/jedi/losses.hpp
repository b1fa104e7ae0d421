#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "jedi/graph.hpp"
#include "jedi/tensor.hpp"

namespace jedi {

// How the distillation term of model j is weighted for a sample from dataset
// i != j: as_printed uses |D_j| / sum_k |D_k|, by_source uses |D_i| / sum_k |D_k|.
enum class Weighting { as_printed, by_source };

std::string_view weighting_name(Weighting w);
Weighting parse_weighting(std::string_view name);

struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 0.4;
  double temperature = 1.0;
  double k = 10.0;
  std::vector<std::uint64_t> dataset_sizes;
  Weighting weighting = Weighting::as_printed;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// -log softmax(logits)[label]; gradient softmax - onehot.
LossGrad cross_entropy(std::span<const double> logits, int label);

// Crammer-Singer: max(0, 1 + max_{c != y} s_c - s_y). The subgradient picks
// the lowest-index violator on ties.
LossGrad multiclass_hinge(std::span<const double> scores, int label);

struct KdGrad {
  double loss = 0.0;
  std::vector<double> grad_student;
  std::vector<double> grad_teacher;  // only used when distillation reaches the teacher
};

// T^2 * cross-entropy between softmax(teacher / T) and softmax(student / T).
KdGrad kd_cross_entropy(std::span<const double> student_logits,
                        std::span<const double> teacher_logits, double temperature);

// A home index past the end of `sizes` marks a pool sample: every model is
// off-diagonal and by_source falls back to the as_printed weight.
double dataset_weight(std::size_t home, std::size_t model, std::span<const std::uint64_t> sizes,
                      Weighting weighting = Weighting::as_printed);

// Unweighted task losses of one sample or summed over a batch: n student
// classification, n teacher classification, n distillation terms.
struct TermBreakdown {
  std::vector<double> student_cls;
  std::vector<double> teacher_cls;
  std::vector<double> kd;

  explicit TermBreakdown(std::size_t n = 0) : student_cls(n), teacher_cls(n), kd(n) {}
  std::size_t num_tasks() const noexcept { return student_cls.size() * 3; }
  void add(const TermBreakdown& other);
  void scale(double factor);
};

struct SampleTerms {
  std::size_t home = 0;  // >= n for pool samples, which must be unlabeled
  std::optional<int> label;
  bool kd_enabled = true;
  // Models j whose distillation term applies to this sample; empty means all.
  std::vector<bool> kd_models;
};

struct CombinedLoss {
  double value = 0.0;
  TermBreakdown terms;
  std::vector<std::vector<double>> grad_student;  // d value / d student logits, per model
  std::vector<std::vector<double>> grad_teacher;
  // Models that received a term with non-zero weight.
  std::vector<bool> student_active, teacher_active;
  bool contributed = true;  // false for an unlabeled sample with distillation off
};

// alpha CE(M_i(x), y) + beta Hinge(E_i(x), y) + gamma sum_j w_ij KD(M_j(x), E_j(x)).
// Unlabeled samples keep only the distillation sum. Teacher logits are
// constants in the distillation term unless `kd_into_teacher` is set.
CombinedLoss combined_loss(const std::vector<std::span<const double>>& student_logits,
                           const std::vector<std::span<const double>>& teacher_logits,
                           const SampleTerms& sample, const LossWeights& weights,
                           bool kd_into_teacher = false);

struct BatchLoss {
  double value = 0.0;     // mean over the batch
  TermBreakdown terms;    // mean over the batch
  LogitGrads grads;       // of the batch mean; empty for models no term reached
  std::size_t skipped = 0;  // unlabeled samples that contributed nothing
};

BatchLoss combined_loss_batch(const ForwardPass& pass, const std::vector<SampleTerms>& samples,
                              const LossWeights& weights, bool kd_into_teacher = false);

}  // namespace jedi
