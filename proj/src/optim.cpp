#include "jedi/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "jedi/error.hpp"

namespace jedi {

void adamw_step(ParamTensor& p, const AdamWConfig& config) {
  auto& g = p.grad.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) {
      throw OptimizerError(p.name, "non-finite gradient at index " + std::to_string(i));
    }
  }
  p.step_count += 1;
  const double t = static_cast<double>(p.step_count);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  auto& w = p.value.data();
  auto& m = p.adam_m.data();
  auto& v = p.adam_v.data();
  for (std::size_t i = 0; i < w.size(); ++i) {
    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    const double old = w[i];
    w[i] = old - config.lr * m_hat / (std::sqrt(v_hat) + config.eps) -
           config.lr * config.weight_decay * old;
    g[i] = 0.0;
  }
  p.touched = false;
}

double finite_diff_check(const std::function<double(bool)>& loss_fn,
                         std::span<ParamTensor* const> params, double epsilon,
                         std::size_t max_coords_per_param, std::uint64_t seed) {
  for (ParamTensor* p : params) p->zero_grad();
  loss_fn(true);
  std::vector<Tensor2> analytic;
  analytic.reserve(params.size());
  for (ParamTensor* p : params) analytic.push_back(p->grad);

  double worst = 0.0;
  Rng rng = Rng::stream(seed, "fdcheck");
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    ParamTensor& p = *params[pi];
    std::vector<std::size_t> coords(p.value.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_coords_per_param != 0 && coords.size() > max_coords_per_param) {
      Rng local = rng.split(pi);
      local.shuffle(coords);
      coords.resize(max_coords_per_param);
    }
    for (std::size_t idx : coords) {
      double& x = p.value.data()[idx];
      const double saved = x;
      x = saved + epsilon;
      const double up = loss_fn(false);
      x = saved - epsilon;
      const double down = loss_fn(false);
      x = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[pi].data()[idx];
      const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  for (ParamTensor* p : params) p->zero_grad();
  return worst;
}

}  // namespace jedi
