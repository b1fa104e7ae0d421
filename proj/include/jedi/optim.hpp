#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "jedi/tensor.hpp"

namespace jedi {

struct AdamWConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 3e-3;
};

// Decoupled-weight-decay Adam step. Moments and step_count advance, value moves
// by -lr * m_hat / (sqrt(v_hat) + eps) - lr * weight_decay * value, and the
// gradient is zeroed. Throws OptimizerError on a non-finite gradient.
void adamw_step(ParamTensor& p, const AdamWConfig& config);

// `loss_fn(true)` must accumulate analytic gradients into the
// parameters and return the loss; `loss_fn(false)` only evaluates. Returns the
// max over checked coordinates of |analytic - numeric| / max(1e-8, |a| + |n|).
// A non-zero `max_coords_per_param` samples that many coordinates per tensor.
double finite_diff_check(const std::function<double(bool)>& loss_fn,
                         std::span<ParamTensor* const> params, double epsilon = 1e-6,
                         std::size_t max_coords_per_param = 0, std::uint64_t seed = 0);

}  // namespace jedi
