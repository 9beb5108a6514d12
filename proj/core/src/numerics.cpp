#include "pclreid/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pclreid/errors.hpp"

namespace pclreid {

std::vector<double> l2_normalize(std::span<const double> v) {
  const double norm = std::sqrt(squared_norm(v));
  if (!(norm > 0.0)) throw DegenerateInputError("l2_normalize: zero-norm input");
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / norm;
  return out;
}

std::vector<double> l2_normalize_backward(std::span<const double> unit, double norm,
                                          std::span<const double> grad) {
  const double proj = dot(unit, grad);
  std::vector<double> out(unit.size());
  for (std::size_t i = 0; i < unit.size(); ++i) out[i] = (grad[i] - proj * unit[i]) / norm;
  return out;
}

NormalizedRows l2_normalize_rows(const Matrix& m) {
  NormalizedRows out{Matrix(m.rows(), m.cols()), std::vector<double>(m.rows())};
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double norm = std::sqrt(squared_norm(m.row(r)));
    if (!(norm > 0.0)) {
      throw DegenerateInputError("l2_normalize: zero-norm row " + std::to_string(r));
    }
    out.norms[r] = norm;
    auto src = m.row(r);
    auto dst = out.unit.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) dst[c] = src[c] / norm;
  }
  return out;
}

Matrix l2_normalize_rows_backward(const NormalizedRows& forward, const Matrix& grad) {
  if (grad.rows() != forward.unit.rows() || grad.cols() != forward.unit.cols()) {
    throw ShapeError("l2_normalize_rows_backward: gradient shape mismatch");
  }
  Matrix out(grad.rows(), grad.cols());
  for (std::size_t r = 0; r < grad.rows(); ++r) {
    auto g = l2_normalize_backward(forward.unit.row(r), forward.norms[r], grad.row(r));
    std::copy(g.begin(), g.end(), out.row(r).begin());
  }
  return out;
}

std::vector<double> softmax_stable(std::span<const double> scores, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("temperature", "must be positive");
  if (scores.empty()) return {};
  const double peak = *std::max_element(scores.begin(), scores.end());
  std::vector<double> out(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp((scores[i] - peak) / temperature);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

double log_sum_exp(std::span<const double> scores, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("temperature", "must be positive");
  const double peak = *std::max_element(scores.begin(), scores.end());
  double total = 0.0;
  for (double s : scores) total += std::exp((s - peak) / temperature);
  return peak / temperature + std::log(total);
}

Matrix linear_forward(const Matrix& x, const Matrix& weight, std::span<const double> bias) {
  if (bias.size() != weight.cols()) throw ShapeError("linear_forward: bias length mismatch");
  Matrix y = matmul(x, weight);
  for (std::size_t r = 0; r < y.rows(); ++r) axpy(1.0, bias, y.row(r));
  return y;
}

LinearGrads linear_backward(const Matrix& x, const Matrix& weight, const Matrix& grad_out) {
  if (grad_out.rows() != x.rows() || grad_out.cols() != weight.cols() ||
      x.cols() != weight.rows()) {
    throw ShapeError("linear_backward: shape mismatch");
  }
  LinearGrads g;
  g.input = matmul_nt(grad_out, weight);
  g.weight = matmul_tn(x, grad_out);
  g.bias.assign(weight.cols(), 0.0);
  for (std::size_t r = 0; r < grad_out.rows(); ++r) axpy(1.0, grad_out.row(r), g.bias);
  return g;
}

Matrix relu_forward(const Matrix& pre) {
  Matrix out = pre;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Matrix relu_backward(const Matrix& pre, const Matrix& grad_out) {
  Matrix out = grad_out;
  auto p = pre.values();
  auto g = out.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(p[i] > 0.0)) g[i] = 0.0;
  }
  return out;
}

BatchNormState BatchNormState::identity(std::size_t dim, bool freeze_shift) {
  BatchNormState s;
  s.scale.assign(dim, 1.0);
  s.shift.assign(dim, 0.0);
  s.running_mean.assign(dim, 0.0);
  s.running_var.assign(dim, 1.0);
  s.freeze_shift = freeze_shift;
  return s;
}

Matrix batch_norm_eval(const Matrix& x, const BatchNormState& state) {
  if (x.cols() != state.dim()) throw ShapeError("batch_norm: feature count mismatch");
  Matrix y(x.rows(), x.cols());
  for (std::size_t c = 0; c < x.cols(); ++c) {
    const double inv_std = 1.0 / std::sqrt(state.running_var[c] + state.eps);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      y(r, c) = state.scale[c] * (x(r, c) - state.running_mean[c]) * inv_std + state.shift[c];
    }
  }
  return y;
}

Matrix batch_norm_forward(const Matrix& x, BatchNormState& state, Mode mode,
                          BatchNormCache* cache) {
  if (mode == Mode::eval) return batch_norm_eval(x, state);
  if (x.cols() != state.dim()) throw ShapeError("batch_norm: feature count mismatch");
  const std::size_t n = x.rows();
  if (n < 2) throw UsageError("batch_norm: train mode needs a batch of at least 2 rows");

  Matrix y(n, x.cols());
  BatchNormCache local;
  local.normalized = Matrix(n, x.cols());
  local.inv_std.assign(x.cols(), 0.0);
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += x(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) var += (x(r, c) - mean) * (x(r, c) - mean);
    var /= static_cast<double>(n);
    const double inv_std = 1.0 / std::sqrt(var + state.eps);
    local.inv_std[c] = inv_std;
    for (std::size_t r = 0; r < n; ++r) {
      const double xhat = (x(r, c) - mean) * inv_std;
      local.normalized(r, c) = xhat;
      y(r, c) = state.scale[c] * xhat + state.shift[c];
    }
    const double unbiased = var * static_cast<double>(n) / static_cast<double>(n - 1);
    state.running_mean[c] = (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mean;
    state.running_var[c] = (1.0 - state.momentum) * state.running_var[c] + state.momentum * unbiased;
  }
  if (cache) *cache = std::move(local);
  return y;
}

BatchNormGrads batch_norm_backward(const BatchNormCache& cache, const BatchNormState& state,
                                   const Matrix& grad_out) {
  const Matrix& xhat = cache.normalized;
  if (grad_out.rows() != xhat.rows() || grad_out.cols() != xhat.cols()) {
    throw ShapeError("batch_norm_backward: gradient shape mismatch");
  }
  const std::size_t n = xhat.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  BatchNormGrads g{Matrix(n, xhat.cols()), std::vector<double>(xhat.cols(), 0.0),
                   std::vector<double>(xhat.cols(), 0.0)};
  for (std::size_t c = 0; c < xhat.cols(); ++c) {
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      sum_dy += grad_out(r, c);
      sum_dy_xhat += grad_out(r, c) * xhat(r, c);
    }
    g.scale[c] = sum_dy_xhat;
    g.shift[c] = state.freeze_shift ? 0.0 : sum_dy;
    const double k = state.scale[c] * cache.inv_std[c] * inv_n;
    for (std::size_t r = 0; r < n; ++r) {
      g.input(r, c) = k * (static_cast<double>(n) * grad_out(r, c) - sum_dy - xhat(r, c) * sum_dy_xhat);
    }
  }
  return g;
}

}  // namespace pclreid
