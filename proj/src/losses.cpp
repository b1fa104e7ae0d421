#include "jedi/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "jedi/error.hpp"

namespace jedi {

std::string_view weighting_name(Weighting w) {
  return w == Weighting::as_printed ? "as_printed" : "by_source";
}

Weighting parse_weighting(std::string_view name) {
  if (name == "as_printed") return Weighting::as_printed;
  if (name == "by_source") return Weighting::by_source;
  throw ConfigError("loss.weighting", "unknown value '" + std::string(name) +
                                          "' (valid: as_printed, by_source)");
}

void LossWeights::validate() const {
  auto non_negative = [](double v, const char* field) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(field, "must be a finite value >= 0");
  };
  non_negative(alpha, "loss.alpha");
  non_negative(beta, "loss.beta");
  non_negative(gamma, "loss.gamma");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("loss.temperature", "must be positive");
  }
  if (!(k > 0.0)) throw ConfigError("loss.k", "must be positive");
  for (std::uint64_t s : dataset_sizes) {
    if (s == 0) throw ConfigError("loss.dataset_sizes", "every size must be positive");
  }
}

namespace {

void check_label(int label, std::size_t classes, const char* what) {
  if (label < 0 || static_cast<std::size_t>(label) >= classes) {
    throw DimensionError(std::string(what) + ": label " + std::to_string(label) +
                         " outside [0, " + std::to_string(classes) + ")");
  }
}

}  // namespace

LossGrad cross_entropy(std::span<const double> logits, int label) {
  check_label(label, logits.size(), "cross_entropy");
  LossGrad out;
  out.grad.resize(logits.size());
  log_softmax(logits, 1.0, out.grad);
  out.loss = -out.grad[static_cast<std::size_t>(label)];
  for (double& g : out.grad) g = std::exp(g);
  out.grad[static_cast<std::size_t>(label)] -= 1.0;
  return out;
}

LossGrad multiclass_hinge(std::span<const double> scores, int label) {
  if (scores.size() < 2) throw DimensionError("multiclass_hinge: needs at least 2 classes");
  check_label(label, scores.size(), "multiclass_hinge");
  const auto y = static_cast<std::size_t>(label);
  std::size_t rival = y == 0 ? 1 : 0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (c != y && scores[c] > scores[rival]) rival = c;
  }
  LossGrad out;
  out.grad.assign(scores.size(), 0.0);
  const double margin = 1.0 + scores[rival] - scores[y];
  if (margin > 0.0) {
    out.loss = margin;
    out.grad[rival] = 1.0;
    out.grad[y] = -1.0;
  }
  return out;
}

KdGrad kd_cross_entropy(std::span<const double> student_logits,
                        std::span<const double> teacher_logits, double temperature) {
  if (student_logits.size() != teacher_logits.size()) {
    throw DimensionError("kd_cross_entropy: student width " +
                         std::to_string(student_logits.size()) + " vs teacher width " +
                         std::to_string(teacher_logits.size()));
  }
  if (!(temperature > 0.0)) throw DimensionError("kd_cross_entropy: temperature must be positive");
  const std::size_t c = student_logits.size();
  std::vector<double> log_q(c), p(c);
  log_softmax(student_logits, temperature, log_q);
  softmax(teacher_logits, temperature, p);
  const double t2 = temperature * temperature;
  double cross = 0.0;
  for (std::size_t i = 0; i < c; ++i) cross -= p[i] * log_q[i];
  KdGrad out;
  out.loss = t2 * cross;
  out.grad_student.resize(c);
  out.grad_teacher.resize(c);
  for (std::size_t i = 0; i < c; ++i) {
    out.grad_student[i] = temperature * (std::exp(log_q[i]) - p[i]);
    out.grad_teacher[i] = -temperature * p[i] * (log_q[i] + cross);
  }
  return out;
}

double dataset_weight(std::size_t home, std::size_t model, std::span<const std::uint64_t> sizes,
                      Weighting weighting) {
  if (home == model) return 1.0;
  const bool by_source = weighting == Weighting::by_source && home < sizes.size();
  const std::size_t idx = by_source ? home : model;
  if (idx >= sizes.size()) {
    throw DimensionError("dataset_weight: index " + std::to_string(idx) + " but " +
                         std::to_string(sizes.size()) + " sizes");
  }
  const double total =
      static_cast<double>(std::accumulate(sizes.begin(), sizes.end(), std::uint64_t{0}));
  return static_cast<double>(sizes[idx]) / total;
}

void TermBreakdown::add(const TermBreakdown& other) {
  for (std::size_t i = 0; i < student_cls.size(); ++i) {
    student_cls[i] += other.student_cls[i];
    teacher_cls[i] += other.teacher_cls[i];
    kd[i] += other.kd[i];
  }
}

void TermBreakdown::scale(double factor) {
  for (std::size_t i = 0; i < student_cls.size(); ++i) {
    student_cls[i] *= factor;
    teacher_cls[i] *= factor;
    kd[i] *= factor;
  }
}

CombinedLoss combined_loss(const std::vector<std::span<const double>>& student_logits,
                           const std::vector<std::span<const double>>& teacher_logits,
                           const SampleTerms& sample, const LossWeights& weights,
                           bool kd_into_teacher) {
  const std::size_t n = student_logits.size();
  if (teacher_logits.size() != n) throw DimensionError("combined_loss: student/teacher count");
  if (sample.home >= n && sample.label) {
    throw DimensionError("combined_loss: a labeled sample needs a home dataset below " +
                         std::to_string(n));
  }
  if (!sample.kd_models.empty() && sample.kd_models.size() != n) {
    throw DimensionError("combined_loss: kd_models must have one flag per model");
  }
  CombinedLoss out;
  out.terms = TermBreakdown(n);
  out.grad_student.resize(n);
  out.grad_teacher.resize(n);
  out.student_active.assign(n, false);
  out.teacher_active.assign(n, false);
  for (std::size_t j = 0; j < n; ++j) {
    out.grad_student[j].assign(student_logits[j].size(), 0.0);
    out.grad_teacher[j].assign(teacher_logits[j].size(), 0.0);
  }
  const std::size_t i = sample.home;

  if (sample.label) {
    LossGrad ce = cross_entropy(student_logits[i], *sample.label);
    LossGrad hinge = multiclass_hinge(teacher_logits[i], *sample.label);
    out.terms.student_cls[i] = ce.loss;
    out.terms.teacher_cls[i] = hinge.loss;
    out.value += weights.alpha * ce.loss + weights.beta * hinge.loss;
    out.student_active[i] = weights.alpha > 0.0;
    out.teacher_active[i] = weights.beta > 0.0;
    for (std::size_t c = 0; c < ce.grad.size(); ++c) {
      out.grad_student[i][c] += weights.alpha * ce.grad[c];
      out.grad_teacher[i][c] += weights.beta * hinge.grad[c];
    }
  }

  if (!sample.kd_enabled) {
    out.contributed = sample.label.has_value();
    return out;
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (!sample.kd_models.empty() && !sample.kd_models[j]) continue;
    KdGrad kd = kd_cross_entropy(student_logits[j], teacher_logits[j], weights.temperature);
    const double w = weights.gamma * dataset_weight(i, j, weights.dataset_sizes, weights.weighting);
    out.terms.kd[j] = kd.loss;
    out.value += w * kd.loss;
    if (w == 0.0) continue;
    out.student_active[j] = true;
    if (kd_into_teacher) out.teacher_active[j] = true;
    for (std::size_t c = 0; c < kd.grad_student.size(); ++c) {
      out.grad_student[j][c] += w * kd.grad_student[c];
      if (kd_into_teacher) out.grad_teacher[j][c] += w * kd.grad_teacher[c];
    }
  }
  return out;
}

BatchLoss combined_loss_batch(const ForwardPass& pass, const std::vector<SampleTerms>& samples,
                              const LossWeights& weights, bool kd_into_teacher) {
  const std::size_t n = pass.student_logits.size();
  const std::size_t batch = samples.size();
  if (batch == 0) throw DimensionError("combined_loss_batch: empty batch");
  for (const Tensor2& t : pass.student_logits) {
    if (t.rows() != batch) throw DimensionError("combined_loss_batch: batch size mismatch");
  }
  BatchLoss out;
  out.terms = TermBreakdown(n);
  out.grads.student.reserve(n);
  out.grads.teacher.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    out.grads.student.emplace_back(batch, pass.student_logits[j].cols());
    out.grads.teacher.emplace_back(batch, pass.teacher_logits[j].cols());
  }
  const double inv = 1.0 / static_cast<double>(batch);
  std::vector<bool> student_active(n, false), teacher_active(n, false);
  std::vector<std::span<const double>> s(n), t(n);
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = pass.student_logits[j].row(r);
      t[j] = pass.teacher_logits[j].row(r);
    }
    CombinedLoss one = combined_loss(s, t, samples[r], weights, kd_into_teacher);
    if (!one.contributed) ++out.skipped;
    for (std::size_t j = 0; j < n; ++j) {
      if (one.student_active[j]) student_active[j] = true;
      if (one.teacher_active[j]) teacher_active[j] = true;
    }
    out.value += one.value * inv;
    one.terms.scale(inv);
    out.terms.add(one.terms);
    for (std::size_t j = 0; j < n; ++j) {
      auto gs = out.grads.student[j].row(r);
      auto gt = out.grads.teacher[j].row(r);
      for (std::size_t c = 0; c < gs.size(); ++c) {
        gs[c] = one.grad_student[j][c] * inv;
        gt[c] = one.grad_teacher[j][c] * inv;
      }
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (!student_active[j]) out.grads.student[j] = Tensor2();
    if (!teacher_active[j]) out.grads.teacher[j] = Tensor2();
  }
  return out;
}

}  // namespace jedi
