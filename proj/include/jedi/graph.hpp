#pragma once

#include <vector>

#include "jedi/models.hpp"
#include "jedi/rng.hpp"
#include "jedi/tensor.hpp"

namespace jedi {

struct AdjustCache {
  Tensor2 pre;     // e U + u
  Tensor2 act;     // SiLU(pre)
  DropoutMask mask;
};

// Activations of one batch through every student and teacher.
struct ForwardPass {
  std::vector<Tensor2> segments;
  std::vector<AdjustCache> adjust_cache;
  std::vector<Tensor2> adjusted;
  std::vector<Tensor2> student_logits;
  std::vector<DropoutMask> teacher_masks;
  std::vector<Tensor2> teacher_inputs;  // after the teacher's dropout
  std::vector<Tensor2> teacher_logits;
};

// Upstream gradients w.r.t. the logits; an empty tensor means "no gradient".
struct LogitGrads {
  std::vector<Tensor2> student;
  std::vector<Tensor2> teacher;

  static LogitGrads zeros_like(const ModelSet& models);
};

// Dropout site k of a batch draws from dropout_rng.split(k): experts use
// k = i, teachers use k = n + i. With train == false no dropout is applied and
// dropout_rng may be null.
ForwardPass forward(const ModelSet& models, const Tensor2& features, bool train,
                    const Rng* dropout_rng);

// Reverse pass: accumulates parameter gradients for everything reachable from
// the non-empty entries of `grads`.
void backward(ModelSet& models, const ForwardPass& pass, const LogitGrads& grads);

// Assembled (pre-dropout) teacher input for the batch.
Tensor2 teacher_input(const ModelSet& models, const ForwardPass& pass);

}  // namespace jedi
