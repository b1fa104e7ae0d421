#include "jedi/models.hpp"

#include <algorithm>
#include <cmath>

#include "jedi/error.hpp"
#include "jedi/graph.hpp"

namespace jedi {

std::string_view ensemble_input_name(EnsembleInput mode) {
  switch (mode) {
    case EnsembleInput::predictions: return "predictions";
    case EnsembleInput::base_features: return "base_features";
    case EnsembleInput::adjusted_features: return "adjusted_features";
    case EnsembleInput::adjusted_plus_predictions: return "adjusted_plus_predictions";
  }
  return "?";
}

EnsembleInput parse_ensemble_input(std::string_view name) {
  for (EnsembleInput m : {EnsembleInput::predictions, EnsembleInput::base_features,
                          EnsembleInput::adjusted_features,
                          EnsembleInput::adjusted_plus_predictions}) {
    if (ensemble_input_name(m) == name) return m;
  }
  throw ConfigError("ensemble_input", "unknown mode '" + std::string(name) +
                                          "' (valid: predictions, base_features, "
                                          "adjusted_features, adjusted_plus_predictions)");
}

std::size_t ModelSet::total_width() const {
  std::size_t d = 0;
  for (std::size_t w : segment_widths) d += w;
  return d;
}

std::vector<ParamTensor*> ModelSet::parameters() {
  std::vector<ParamTensor*> out;
  for (StudentModel& s : students) {
    out.insert(out.end(), {&s.adjustment.down_w, &s.adjustment.down_b, &s.adjustment.up_w,
                           &s.adjustment.up_b, &s.head_w, &s.head_b});
  }
  for (TeacherEnsemble& t : teachers) out.insert(out.end(), {&t.meta_w, &t.meta_b});
  return out;
}

std::vector<const ParamTensor*> ModelSet::parameters() const {
  auto ptrs = const_cast<ModelSet*>(this)->parameters();
  return {ptrs.begin(), ptrs.end()};
}

void ModelSet::zero_grad() {
  for (ParamTensor* p : parameters()) p->zero_grad();
}

double teacher_dropout_rate(std::size_t num_classes, std::size_t d, double k) {
  if (d == 0) throw DimensionError("teacher_dropout_rate: d must be positive");
  return std::max(0.0, 1.0 - k * static_cast<double>(num_classes) / static_cast<double>(d));
}

std::size_t ensemble_input_width(EnsembleInput mode, const std::vector<std::size_t>& segment_widths,
                                 const std::vector<std::size_t>& class_counts) {
  std::size_t features = 0, logits = 0;
  for (std::size_t w : segment_widths) features += w;
  for (std::size_t c : class_counts) logits += c;
  switch (mode) {
    case EnsembleInput::predictions: return logits;
    case EnsembleInput::base_features:
    case EnsembleInput::adjusted_features: return features;
    case EnsembleInput::adjusted_plus_predictions: return features + logits;
  }
  return 0;
}

namespace {

Tensor2 uniform_fan_in(std::size_t rows, std::size_t cols, Rng rng) {
  Tensor2 t(rows, cols);
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

ModelSet init_models(const std::vector<DatasetSpec>& experts, std::uint64_t init_seed,
                     const InitPolicy& policy, EnsembleInput mode,
                     const std::vector<ExpertHead>* pretrained) {
  if (policy.hidden_width == 0) throw ConfigError("model.hidden_width", "must be positive");
  if (!(policy.adjust_dropout >= 0.0 && policy.adjust_dropout < 1.0)) {
    throw ConfigError("model.adjust_dropout", "must lie in [0, 1)");
  }
  if (!(policy.teacher_k > 0.0)) throw ConfigError("model.teacher_k", "must be positive");
  ModelSet set;
  set.mode = mode;
  for (const DatasetSpec& d : experts) {
    if (d.is_pool()) continue;
    set.segment_widths.push_back(d.feature_dim);
    set.class_counts.push_back(static_cast<std::size_t>(d.num_classes));
  }
  const std::size_t n = set.segment_widths.size();
  if (pretrained && pretrained->size() != n) {
    throw DimensionError("init_models: " + std::to_string(pretrained->size()) +
                         " pretrained heads for " + std::to_string(n) + " experts");
  }
  const std::size_t d_total = set.total_width();
  const std::size_t teacher_in = ensemble_input_width(mode, set.segment_widths, set.class_counts);
  const Rng init = Rng::stream(init_seed, "init");

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t d = set.segment_widths[i], c = set.class_counts[i], m = policy.hidden_width;
    const std::string tag = "student" + std::to_string(i);
    const Rng r = init.split(i);
    StudentModel s;
    s.dataset_id = i;
    s.adjustment.down_w = ParamTensor(tag + ".adjust.down_w", uniform_fan_in(d, m, r.split(0)));
    s.adjustment.down_b = ParamTensor(tag + ".adjust.down_b", Tensor2(1, m));
    s.adjustment.up_w = ParamTensor(tag + ".adjust.up_w", Tensor2(m, d));
    s.adjustment.up_b = ParamTensor(tag + ".adjust.up_b", Tensor2(1, d));
    s.adjustment.keep_probability = 1.0 - policy.adjust_dropout;
    if (pretrained && policy.warm_start) {
      const ExpertHead& h = (*pretrained)[i];
      if (h.weight.rows() != d || h.weight.cols() != c || h.bias.cols() != c) {
        throw DimensionError("init_models: pretrained head " + h.weight.shape() +
                             " does not fit segment " + std::to_string(d) + " x " +
                             std::to_string(c));
      }
      s.head_w = ParamTensor(tag + ".head_w", h.weight);
      s.head_b = ParamTensor(tag + ".head_b", h.bias);
    } else {
      s.head_w = ParamTensor(tag + ".head_w", uniform_fan_in(d, c, r.split(1)));
      s.head_b = ParamTensor(tag + ".head_b", Tensor2(1, c));
    }
    set.students.push_back(std::move(s));

    TeacherEnsemble t;
    t.dataset_id = i;
    t.dropout_rate = teacher_dropout_rate(c, d_total, policy.teacher_k);
    const std::string ttag = "teacher" + std::to_string(i);
    t.meta_w = ParamTensor(ttag + ".meta_w", uniform_fan_in(teacher_in, c, init.split(n + i)));
    t.meta_b = ParamTensor(ttag + ".meta_b", Tensor2(1, c));
    set.teachers.push_back(std::move(t));
  }
  return set;
}

std::vector<double> adjust(std::span<const double> e, const AdjustmentModule& module,
                           bool train_mode, const Rng* rng) {
  if (e.size() != module.width()) {
    throw DimensionError("adjust: input width " + std::to_string(e.size()) + " vs module width " +
                         std::to_string(module.width()));
  }
  Tensor2 x(1, e.size(), std::vector<double>(e.begin(), e.end()));
  Tensor2 act = silu(affine(x, module.down_w, module.down_b));
  Tensor2 up = affine(act, module.up_w, module.up_b);
  if (train_mode) {
    if (!rng) throw Error("adjust: train mode needs a dropout stream");
    up = DropoutMask::sample(1, up.cols(), module.keep_probability, *rng).apply(up);
  }
  add_inplace(up, x);
  return up.data();
}

namespace {

Tensor2 single_row(const SampleRecord& record) {
  return Tensor2(1, record.features.size(),
                 std::vector<double>(record.features.begin(), record.features.end()));
}

}  // namespace

std::vector<double> student_forward(const SampleRecord& record, const EmbeddingStore& store,
                                    const StudentModel& student) {
  auto seg = segment_view(record, store, student.dataset_id);
  std::vector<double> e(seg.begin(), seg.end());
  Tensor2 adj(1, e.size(), adjust(e, student.adjustment));
  return affine(adj, student.head_w, student.head_b).data();
}

std::vector<double> teacher_forward(const SampleRecord& record, const EmbeddingStore& store,
                                    const ModelSet& models, std::size_t teacher_id) {
  if (teacher_id >= models.teachers.size()) {
    throw DimensionError("teacher id " + std::to_string(teacher_id) + " out of range");
  }
  if (record.features.size() != store.total_dim() || store.total_dim() != models.total_width()) {
    throw DimensionError("teacher_forward: record width " +
                         std::to_string(record.features.size()) + " vs model width " +
                         std::to_string(models.total_width()));
  }
  ForwardPass pass = forward(models, single_row(record), false, nullptr);
  return pass.teacher_logits[teacher_id].data();
}

}  // namespace jedi
