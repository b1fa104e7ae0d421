#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "jedi/rng.hpp"

namespace jedi {

// Dense row-major matrix of doubles.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor2 from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  void fill(double v);
  bool all_finite() const;
  std::string shape() const;

  friend bool operator==(const Tensor2&, const Tensor2&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Trainable tensor with its gradient accumulator and AdamW moments.
struct ParamTensor {
  std::string name;
  Tensor2 value;
  Tensor2 grad;
  Tensor2 adam_m;
  Tensor2 adam_v;
  std::uint64_t step_count = 0;
  // Set when a backward pass accumulates into grad; cleared by the optimizer.
  bool touched = false;

  ParamTensor() = default;
  ParamTensor(std::string name, Tensor2 value);

  std::size_t rows() const noexcept { return value.rows(); }
  std::size_t cols() const noexcept { return value.cols(); }
  void zero_grad();
};

// Inverted dropout: kept entries are scaled by 1/keep_probability so the
// evaluation path is the identity.
struct DropoutMask {
  double keep_probability = 1.0;
  Tensor2 mask;  // empty in evaluation mode
  std::uint64_t rng_seed = 0;

  static DropoutMask identity() { return {}; }
  static DropoutMask sample(std::size_t rows, std::size_t cols, double keep_probability, Rng rng);

  bool active() const noexcept { return !mask.empty(); }
  Tensor2 apply(const Tensor2& x) const;
  // Gradient of apply(): the same elementwise scaling.
  Tensor2 backward(const Tensor2& grad_out) const { return apply(grad_out); }
};

// out = x * W + b
Tensor2 affine(const Tensor2& x, const ParamTensor& w, const ParamTensor& b);
// Accumulates dW += x^T g, db += colsum(g) and returns g W^T.
Tensor2 affine_backward(const Tensor2& x, ParamTensor& w, ParamTensor& b, const Tensor2& grad_out);
// As affine_backward but skips the input gradient (x is data).
void affine_backward_params(const Tensor2& x, ParamTensor& w, ParamTensor& b,
                            const Tensor2& grad_out);

double sigmoid(double x);
double silu(double x);
double silu_grad(double x);
Tensor2 silu(const Tensor2& x);
Tensor2 silu_backward(const Tensor2& x, const Tensor2& grad_out);

Tensor2 softmax_rows(const Tensor2& x, double temperature = 1.0);
Tensor2 log_softmax_rows(const Tensor2& x, double temperature = 1.0);
void softmax(std::span<const double> logits, double temperature, std::span<double> out);
void log_softmax(std::span<const double> logits, double temperature, std::span<double> out);

Tensor2 add(const Tensor2& a, const Tensor2& b);
void add_inplace(Tensor2& a, const Tensor2& b);
Tensor2 concat_cols(const std::vector<const Tensor2*>& parts);
Tensor2 slice_cols(const Tensor2& x, std::size_t begin, std::size_t end);
void add_into_cols(Tensor2& dst, std::size_t begin, const Tensor2& src);
Tensor2 gather_rows(const Tensor2& x, std::span<const std::size_t> rows);

}  // namespace jedi
