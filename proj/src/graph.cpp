#include "jedi/graph.hpp"

#include "jedi/error.hpp"

namespace jedi {

LogitGrads LogitGrads::zeros_like(const ModelSet& models) {
  LogitGrads g;
  g.student.resize(models.num_experts());
  g.teacher.resize(models.num_experts());
  return g;
}

Tensor2 teacher_input(const ModelSet& models, const ForwardPass& pass) {
  std::vector<const Tensor2*> parts;
  switch (models.mode) {
    case EnsembleInput::predictions:
      for (const Tensor2& t : pass.student_logits) parts.push_back(&t);
      break;
    case EnsembleInput::base_features:
      for (const Tensor2& t : pass.segments) parts.push_back(&t);
      break;
    case EnsembleInput::adjusted_features:
      for (const Tensor2& t : pass.adjusted) parts.push_back(&t);
      break;
    case EnsembleInput::adjusted_plus_predictions:
      for (const Tensor2& t : pass.adjusted) parts.push_back(&t);
      for (const Tensor2& t : pass.student_logits) parts.push_back(&t);
      break;
  }
  return concat_cols(parts);
}

ForwardPass forward(const ModelSet& models, const Tensor2& features, bool train,
                    const Rng* dropout_rng) {
  const std::size_t n = models.num_experts();
  if (features.cols() != models.total_width()) {
    throw DimensionError("forward: features " + features.shape() + " vs model width " +
                         std::to_string(models.total_width()));
  }
  if (train && !dropout_rng) throw Error("forward: train mode needs a dropout stream");
  const std::size_t batch = features.rows();
  ForwardPass pass;
  pass.segments.reserve(n);
  pass.adjust_cache.resize(n);
  pass.adjusted.reserve(n);
  pass.student_logits.reserve(n);

  std::size_t offset = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const StudentModel& s = models.students[i];
    const std::size_t w = models.segment_widths[i];
    pass.segments.push_back(slice_cols(features, offset, offset + w));
    offset += w;

    AdjustCache& cache = pass.adjust_cache[i];
    cache.pre = affine(pass.segments[i], s.adjustment.down_w, s.adjustment.down_b);
    cache.act = silu(cache.pre);
    Tensor2 up = affine(cache.act, s.adjustment.up_w, s.adjustment.up_b);
    if (train) {
      cache.mask = DropoutMask::sample(batch, w, s.adjustment.keep_probability,
                                       dropout_rng->split(i));
      up = cache.mask.apply(up);
    }
    add_inplace(up, pass.segments[i]);
    pass.adjusted.push_back(std::move(up));
    pass.student_logits.push_back(affine(pass.adjusted[i], s.head_w, s.head_b));
  }

  const Tensor2 input = teacher_input(models, pass);
  pass.teacher_masks.resize(n);
  pass.teacher_inputs.reserve(n);
  pass.teacher_logits.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const TeacherEnsemble& t = models.teachers[i];
    if (input.cols() != t.meta_w.rows()) {
      throw DimensionError("teacher " + std::to_string(i) + ": " +
                           std::string(ensemble_input_name(models.mode)) + " input " +
                           input.shape() + " vs meta-classifier " + t.meta_w.value.shape());
    }
    if (train && t.dropout_rate > 0.0) {
      pass.teacher_masks[i] = DropoutMask::sample(batch, input.cols(), 1.0 - t.dropout_rate,
                                                  dropout_rng->split(n + i));
      pass.teacher_inputs.push_back(pass.teacher_masks[i].apply(input));
    } else {
      pass.teacher_inputs.push_back(input);
    }
    pass.teacher_logits.push_back(affine(pass.teacher_inputs[i], t.meta_w, t.meta_b));
  }
  return pass;
}

void backward(ModelSet& models, const ForwardPass& pass, const LogitGrads& grads) {
  const std::size_t n = models.num_experts();
  const std::size_t batch = pass.segments.empty() ? 0 : pass.segments.front().rows();
  std::vector<Tensor2> d_logits(n);
  std::vector<Tensor2> d_adjusted(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i < grads.student.size() && !grads.student[i].empty()) d_logits[i] = grads.student[i];
  }

  // Teachers first: their input may depend on student logits and adjustments.
  Tensor2 d_input;
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= grads.teacher.size() || grads.teacher[i].empty()) continue;
    TeacherEnsemble& t = models.teachers[i];
    Tensor2 d_in = affine_backward(pass.teacher_inputs[i], t.meta_w, t.meta_b, grads.teacher[i]);
    d_in = pass.teacher_masks[i].backward(d_in);
    if (d_input.empty()) {
      d_input = std::move(d_in);
    } else {
      add_inplace(d_input, d_in);
    }
  }
  if (!d_input.empty() && models.mode != EnsembleInput::base_features) {
    std::size_t offset = 0;
    auto route = [&](std::vector<Tensor2>& dst, std::size_t i, std::size_t width) {
      Tensor2 part = slice_cols(d_input, offset, offset + width);
      offset += width;
      if (dst[i].empty()) {
        dst[i] = std::move(part);
      } else {
        add_inplace(dst[i], part);
      }
    };
    if (models.mode != EnsembleInput::predictions) {
      for (std::size_t i = 0; i < n; ++i) route(d_adjusted, i, models.segment_widths[i]);
    }
    if (models.mode != EnsembleInput::adjusted_features) {
      for (std::size_t i = 0; i < n; ++i) route(d_logits, i, models.class_counts[i]);
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    StudentModel& s = models.students[i];
    if (!d_logits[i].empty()) {
      Tensor2 d_adj = affine_backward(pass.adjusted[i], s.head_w, s.head_b, d_logits[i]);
      if (d_adjusted[i].empty()) {
        d_adjusted[i] = std::move(d_adj);
      } else {
        add_inplace(d_adjusted[i], d_adj);
      }
    }
    if (d_adjusted[i].empty()) continue;
    // adjusted = e + mask * (act W + w); e is frozen data.
    const AdjustCache& cache = pass.adjust_cache[i];
    Tensor2 d_up = cache.mask.backward(d_adjusted[i]);
    Tensor2 d_act = affine_backward(cache.act, s.adjustment.up_w, s.adjustment.up_b, d_up);
    Tensor2 d_pre = silu_backward(cache.pre, d_act);
    affine_backward_params(pass.segments[i], s.adjustment.down_w, s.adjustment.down_b, d_pre);
  }
  (void)batch;
}

}  // namespace jedi
