#include "jedi/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "jedi/error.hpp"

namespace jedi {

namespace {

void require_same_shape(const Tensor2& a, const Tensor2& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + ": shape " + a.shape() + " vs " + b.shape());
  }
}

}  // namespace

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match " +
                         shape());
  }
}

Tensor2 Tensor2::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Tensor2 out(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != out.cols()) throw DimensionError("ragged rows in Tensor2::from_rows");
    std::copy(rows[r].begin(), rows[r].end(), out.row(r).begin());
  }
  return out;
}

void Tensor2::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor2::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor2::shape() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

ParamTensor::ParamTensor(std::string n, Tensor2 v)
    : name(std::move(n)),
      value(std::move(v)),
      grad(value.rows(), value.cols()),
      adam_m(value.rows(), value.cols()),
      adam_v(value.rows(), value.cols()) {}

void ParamTensor::zero_grad() {
  grad.fill(0.0);
  touched = false;
}

DropoutMask DropoutMask::sample(std::size_t rows, std::size_t cols, double keep_probability,
                                Rng rng) {
  DropoutMask m;
  m.keep_probability = keep_probability;
  m.rng_seed = rng.key();
  if (keep_probability >= 1.0) return m;
  m.mask = Tensor2(rows, cols);
  if (keep_probability <= 0.0) return m;  // everything dropped
  const double scale = 1.0 / keep_probability;
  for (double& v : m.mask.data()) v = rng.uniform() < keep_probability ? scale : 0.0;
  return m;
}

Tensor2 DropoutMask::apply(const Tensor2& x) const {
  if (!active()) return x;
  require_same_shape(x, mask, "dropout");
  Tensor2 out = x;
  auto& d = out.data();
  const auto& m = mask.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] *= m[i];
  return out;
}

Tensor2 affine(const Tensor2& x, const ParamTensor& w, const ParamTensor& b) {
  if (x.cols() != w.rows()) {
    throw DimensionError("affine: input " + x.shape() + " vs weight " + w.value.shape());
  }
  if (b.rows() != 1 || b.cols() != w.cols()) {
    throw DimensionError("affine: weight " + w.value.shape() + " vs bias " + b.value.shape());
  }
  const std::size_t n = x.rows(), in = x.cols(), out_w = w.cols();
  Tensor2 out(n, out_w);
  const double* W = w.value.data().data();
  const double* B = b.value.data().data();
  for (std::size_t r = 0; r < n; ++r) {
    double* o = out.row(r).data();
    std::copy(B, B + out_w, o);
    const double* xr = x.row(r).data();
    for (std::size_t k = 0; k < in; ++k) {
      const double xv = xr[k];
      if (xv == 0.0) continue;
      const double* wk = W + k * out_w;
      for (std::size_t c = 0; c < out_w; ++c) o[c] += xv * wk[c];
    }
  }
  return out;
}

void affine_backward_params(const Tensor2& x, ParamTensor& w, ParamTensor& b,
                            const Tensor2& grad_out) {
  if (grad_out.rows() != x.rows() || grad_out.cols() != w.cols()) {
    throw DimensionError("affine backward: grad " + grad_out.shape() + " vs output [" +
                         std::to_string(x.rows()) + "x" + std::to_string(w.cols()) + "]");
  }
  const std::size_t n = x.rows(), in = x.cols(), out_w = w.cols();
  double* dW = w.grad.data().data();
  double* dB = b.grad.data().data();
  for (std::size_t r = 0; r < n; ++r) {
    const double* g = grad_out.row(r).data();
    const double* xr = x.row(r).data();
    for (std::size_t c = 0; c < out_w; ++c) dB[c] += g[c];
    for (std::size_t k = 0; k < in; ++k) {
      const double xv = xr[k];
      if (xv == 0.0) continue;
      double* dwk = dW + k * out_w;
      for (std::size_t c = 0; c < out_w; ++c) dwk[c] += xv * g[c];
    }
  }
  w.touched = true;
  b.touched = true;
}

Tensor2 affine_backward(const Tensor2& x, ParamTensor& w, ParamTensor& b, const Tensor2& grad_out) {
  affine_backward_params(x, w, b, grad_out);
  const std::size_t n = x.rows(), in = x.cols(), out_w = w.cols();
  Tensor2 dx(n, in);
  const double* W = w.value.data().data();
  for (std::size_t r = 0; r < n; ++r) {
    const double* g = grad_out.row(r).data();
    double* d = dx.row(r).data();
    for (std::size_t k = 0; k < in; ++k) {
      const double* wk = W + k * out_w;
      double s = 0.0;
      for (std::size_t c = 0; c < out_w; ++c) s += g[c] * wk[c];
      d[k] = s;
    }
  }
  return dx;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double silu(double x) { return x * sigmoid(x); }

double silu_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

Tensor2 silu(const Tensor2& x) {
  Tensor2 out = x;
  for (double& v : out.data()) v = silu(v);
  return out;
}

Tensor2 silu_backward(const Tensor2& x, const Tensor2& grad_out) {
  require_same_shape(x, grad_out, "silu backward");
  Tensor2 out = grad_out;
  auto& d = out.data();
  const auto& xs = x.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] *= silu_grad(xs[i]);
  return out;
}

void softmax(std::span<const double> logits, double temperature, std::span<double> out) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) mx = std::max(mx, v / temperature);
  double sum = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    out[c] = std::exp(logits[c] / temperature - mx);
    sum += out[c];
  }
  for (double& v : out) v /= sum;
}

void log_softmax(std::span<const double> logits, double temperature, std::span<double> out) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) mx = std::max(mx, v / temperature);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v / temperature - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t c = 0; c < logits.size(); ++c) out[c] = logits[c] / temperature - lse;
}

Tensor2 softmax_rows(const Tensor2& x, double temperature) {
  if (!(temperature > 0.0)) throw DimensionError("softmax temperature must be positive");
  Tensor2 out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) softmax(x.row(r), temperature, out.row(r));
  return out;
}

Tensor2 log_softmax_rows(const Tensor2& x, double temperature) {
  if (!(temperature > 0.0)) throw DimensionError("softmax temperature must be positive");
  Tensor2 out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) log_softmax(x.row(r), temperature, out.row(r));
  return out;
}

Tensor2 add(const Tensor2& a, const Tensor2& b) {
  Tensor2 out = a;
  add_inplace(out, b);
  return out;
}

void add_inplace(Tensor2& a, const Tensor2& b) {
  require_same_shape(a, b, "add");
  auto& d = a.data();
  const auto& s = b.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

Tensor2 concat_cols(const std::vector<const Tensor2*>& parts) {
  if (parts.empty()) return {};
  const std::size_t rows = parts.front()->rows();
  std::size_t cols = 0;
  for (const Tensor2* p : parts) {
    if (p->rows() != rows) {
      throw DimensionError("concat: " + parts.front()->shape() + " vs " + p->shape());
    }
    cols += p->cols();
  }
  Tensor2 out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double* o = out.row(r).data();
    for (const Tensor2* p : parts) {
      auto src = p->row(r);
      o = std::copy(src.begin(), src.end(), o);
    }
  }
  return out;
}

Tensor2 slice_cols(const Tensor2& x, std::size_t begin, std::size_t end) {
  if (begin > end || end > x.cols()) {
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range for " + x.shape());
  }
  Tensor2 out(x.rows(), end - begin);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto src = x.row(r);
    std::copy(src.begin() + begin, src.begin() + end, out.row(r).begin());
  }
  return out;
}

void add_into_cols(Tensor2& dst, std::size_t begin, const Tensor2& src) {
  if (src.rows() != dst.rows() || begin + src.cols() > dst.cols()) {
    throw DimensionError("add_into_cols: " + src.shape() + " into " + dst.shape());
  }
  for (std::size_t r = 0; r < dst.rows(); ++r) {
    auto s = src.row(r);
    auto d = dst.row(r);
    for (std::size_t c = 0; c < s.size(); ++c) d[begin + c] += s[c];
  }
}

Tensor2 gather_rows(const Tensor2& x, std::span<const std::size_t> rows) {
  Tensor2 out(rows.size(), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = x.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace jedi
