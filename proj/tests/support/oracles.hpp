#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "jedi/tensor.hpp"

namespace jedi::fixtures {

inline std::vector<double> softmax_ref(const std::vector<double>& z, double t) {
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += p[i] = std::exp((z[i] - m) / t);
  for (double& x : p) x /= s;
  return p;
}

inline double kd_ref(const std::vector<double>& student, const std::vector<double>& teacher,
                     double t) {
  const auto p = softmax_ref(teacher, t), q = softmax_ref(student, t);
  double v = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) v -= p[i] * std::log(q[i]);
  return t * t * v;
}

// Enumerates every rival class.
inline double hinge_ref(const std::vector<double>& s, int y) {
  double worst = 0.0;
  for (std::size_t c = 0; c < s.size(); ++c) {
    if (static_cast<int>(c) == y) continue;
    worst = std::max(worst, 1.0 + s[c] - s[static_cast<std::size_t>(y)]);
  }
  return worst;
}

// Quadratic-time AP: ranks come from pairwise comparisons instead of a sort.
inline double map_ref(const Tensor2& scores, const std::vector<int>& labels) {
  const std::size_t n = scores.rows();
  double total = 0.0;
  std::size_t classes = 0;
  for (std::size_t c = 0; c < scores.cols(); ++c) {
    std::vector<std::size_t> rank(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t ahead = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (scores(j, c) > scores(i, c) || (scores(j, c) == scores(i, c) && j < i)) ++ahead;
      }
      rank[i] = ahead + 1;
    }
    std::size_t positives = 0;
    double sum = 0.0;
    for (std::size_t r = 1; r <= n; ++r) {
      for (std::size_t i = 0; i < n; ++i) {
        if (rank[i] != r || labels[i] != static_cast<int>(c)) continue;
        std::size_t hits = 0;
        for (std::size_t j = 0; j < n; ++j) {
          if (labels[j] == static_cast<int>(c) && rank[j] <= r) ++hits;
        }
        ++positives;
        sum += static_cast<double>(hits) / static_cast<double>(r);
      }
    }
    if (positives == 0) continue;
    total += sum / static_cast<double>(positives);
    ++classes;
  }
  return total / static_cast<double>(classes);
}

}  // namespace jedi::fixtures
