#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "jedi/error.hpp"
#include "jedi/optim.hpp"

using namespace jedi;

namespace {

ParamTensor scalar(double value, double grad) {
  ParamTensor p("theta", Tensor2(1, 1, value));
  p.grad(0, 0) = grad;
  p.touched = true;
  return p;
}

}  // namespace

TEST(AdamW, ZeroGradientNoDecayIsIdentity) {
  ParamTensor p("w", Tensor2::from_rows({{1.5, -2.0, 0.25}}));
  const Tensor2 before = p.value;
  AdamWConfig c;
  c.weight_decay = 0.0;
  for (int i = 0; i < 5; ++i) adamw_step(p, c);
  EXPECT_EQ(p.value, before);
  EXPECT_EQ(p.step_count, 5u);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  ParamTensor p = scalar(1.0, 1.0);
  AdamWConfig c;
  c.lr = 0.1;
  c.weight_decay = 0.0;
  adamw_step(p, c);
  // m_hat = 1, v_hat = 1, so the move is lr / (1 + eps).
  EXPECT_NEAR(p.value(0, 0), 1.0 - 0.1 / (1.0 + 1e-8), 1e-15);
  EXPECT_NEAR(p.value(0, 0), 0.9, 1e-8);
}

TEST(AdamW, DecoupledDecayUsesOldValue) {
  ParamTensor p = scalar(1.0, 1.0);
  AdamWConfig c;
  c.lr = 0.1;
  c.weight_decay = 0.01;
  adamw_step(p, c);
  EXPECT_NEAR(p.value(0, 0), 0.899, 1e-8);
}

TEST(AdamW, TwoStepHandTrace) {
  ParamTensor p = scalar(0.5, 2.0);
  AdamWConfig c;
  c.lr = 0.01;
  c.weight_decay = 0.1;
  adamw_step(p, c);
  p.grad(0, 0) = -1.0;
  adamw_step(p, c);
  // Independent recomputation of the two updates.
  double w = 0.5, m = 0.0, v = 0.0;
  const double grads[2] = {2.0, -1.0};
  for (int t = 1; t <= 2; ++t) {
    m = 0.9 * m + 0.1 * grads[t - 1];
    v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    w = w - 0.01 * mh / (std::sqrt(vh) + 1e-8) - 0.01 * 0.1 * w;
  }
  EXPECT_DOUBLE_EQ(p.value(0, 0), w);
  EXPECT_EQ(p.step_count, 2u);
}

TEST(AdamW, GradientZeroedAfterStep) {
  ParamTensor p = scalar(1.0, 3.0);
  adamw_step(p, AdamWConfig{});
  EXPECT_EQ(p.grad(0, 0), 0.0);
  EXPECT_FALSE(p.touched);
}

TEST(AdamW, NonFiniteGradientNamesParameter) {
  ParamTensor p = scalar(1.0, std::numeric_limits<double>::quiet_NaN());
  p.name = "teacher0.meta_w";
  try {
    adamw_step(p, AdamWConfig{});
    FAIL();
  } catch (const OptimizerError& e) {
    EXPECT_EQ(e.parameter(), "teacher0.meta_w");
  }
  EXPECT_EQ(p.step_count, 0u);
}

TEST(FiniteDiff, QuadraticIsExact) {
  ParamTensor p("theta", Tensor2(1, 1, 3.0));
  ParamTensor* params[] = {&p};
  auto loss = [&](bool grad) {
    const double t = p.value(0, 0);
    if (grad) p.grad(0, 0) += t;
    return 0.5 * t * t;
  };
  EXPECT_LT(finite_diff_check(loss, params), 1e-6);
}

TEST(FiniteDiff, ZeroParametersIsVacuous) {
  auto loss = [](bool) { return 1.0; };
  EXPECT_EQ(finite_diff_check(loss, std::span<ParamTensor* const>{}), 0.0);
}

TEST(FiniteDiff, DetectsWrongGradient) {
  ParamTensor p("theta", Tensor2(1, 2, 1.0));
  ParamTensor* params[] = {&p};
  auto loss = [&](bool grad) {
    if (grad) {
      p.grad(0, 0) += 2.0 * p.value(0, 0);
      p.grad(0, 1) += 0.0;  // wrong: true gradient is cos
    }
    return p.value(0, 0) * p.value(0, 0) + std::sin(p.value(0, 1));
  };
  EXPECT_GT(finite_diff_check(loss, params), 0.5);
}
