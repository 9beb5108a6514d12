#pragma once

#include <span>
#include <vector>

#include "pclreid/matrix.hpp"

namespace pclreid {

enum class Mode { train, eval };

// ---------------------------------------------------------------------------
// L2 normalization

/// v / ||v||. Throws DegenerateInputError on a zero vector.
std::vector<double> l2_normalize(std::span<const double> v);

/// Gradient wrt the input of l2_normalize given the output `unit`, the input
/// norm and the upstream gradient: (I - u u^T) g / ||v||.
std::vector<double> l2_normalize_backward(std::span<const double> unit, double norm,
                                          std::span<const double> grad);

struct NormalizedRows {
  Matrix unit;
  std::vector<double> norms;
};

NormalizedRows l2_normalize_rows(const Matrix& m);
Matrix l2_normalize_rows_backward(const NormalizedRows& forward, const Matrix& grad);

// ---------------------------------------------------------------------------
// Softmax

/// p_i proportional to exp(s_i / temperature), evaluated with max subtraction.
/// Throws ConfigError if temperature <= 0.
std::vector<double> softmax_stable(std::span<const double> scores, double temperature);

/// log(sum_i exp(s_i / temperature)), evaluated with max subtraction.
double log_sum_exp(std::span<const double> scores, double temperature);

// ---------------------------------------------------------------------------
// Linear map y = x W + b, W is (in x out).

Matrix linear_forward(const Matrix& x, const Matrix& weight, std::span<const double> bias);

struct LinearGrads {
  Matrix input;
  Matrix weight;
  std::vector<double> bias;
};

LinearGrads linear_backward(const Matrix& x, const Matrix& weight, const Matrix& grad_out);

// ---------------------------------------------------------------------------
// Rectifier

Matrix relu_forward(const Matrix& pre);
Matrix relu_backward(const Matrix& pre, const Matrix& grad_out);

// ---------------------------------------------------------------------------
// Batch normalization

struct BatchNormState {
  std::vector<double> scale;
  std::vector<double> shift;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double eps = 1e-5;
  double momentum = 0.1;
  /// BNNeck convention: the shift stays at zero and never receives gradients.
  bool freeze_shift = true;

  /// scale = 1, shift = 0, running mean 0, running variance 1.
  static BatchNormState identity(std::size_t dim, bool freeze_shift = true);
  std::size_t dim() const noexcept { return scale.size(); }

  friend bool operator==(const BatchNormState&, const BatchNormState&) = default;
};

struct BatchNormCache {
  Matrix normalized;            ///< x_hat
  std::vector<double> inv_std;  ///< 1 / sqrt(var + eps) per feature
};

/// Train mode normalizes with biased batch statistics and folds the unbiased
/// batch variance into the running estimate:
///   running <- (1 - momentum) * running + momentum * batch.
/// Eval mode uses the running statistics and leaves the state untouched.
/// `cache` (optional) receives what the train-mode backward pass needs.
Matrix batch_norm_forward(const Matrix& x, BatchNormState& state, Mode mode,
                          BatchNormCache* cache = nullptr);

/// Eval-mode forward on an immutable state.
Matrix batch_norm_eval(const Matrix& x, const BatchNormState& state);

struct BatchNormGrads {
  Matrix input;
  std::vector<double> scale;
  std::vector<double> shift;  ///< all zero when the shift is frozen
};

BatchNormGrads batch_norm_backward(const BatchNormCache& cache, const BatchNormState& state,
                                   const Matrix& grad_out);

}  // namespace pclreid
