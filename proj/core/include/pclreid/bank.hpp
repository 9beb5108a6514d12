#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pclreid/matrix.hpp"

namespace pclreid {

/// Which side of the momentum update the momentum factor weights.
///  - old_centroid: c <- mu * c + (1 - mu) * f   (default)
///  - new_feature:  c <- (1 - mu) * c + mu * f
enum class MomentumConvention { old_centroid, new_feature };

/// Memory bank of one unit-norm centroid per class, stored as a C x d matrix
/// (row j is the centroid of class j). Never trained by gradients; the only
/// write path is the momentum update.
class CentroidBank {
 public:
  /// Rows of `centroids` must already be unit norm (checked to 1e-10).
  CentroidBank(Matrix centroids, double momentum, double temperature,
               MomentumConvention convention = MomentumConvention::old_centroid);

  std::size_t class_count() const noexcept { return centroids_.rows(); }
  std::size_t dim() const noexcept { return centroids_.cols(); }
  double momentum() const noexcept { return momentum_; }
  double temperature() const noexcept { return temperature_; }
  MomentumConvention convention() const noexcept { return convention_; }
  const Matrix& centroids() const noexcept { return centroids_; }
  std::span<const double> centroid(std::size_t j) const { return centroids_.row(j); }

  /// Momentum update of centroid `label` toward unit feature `f`, followed by
  /// re-normalization. Other centroids are untouched.
  void update(std::size_t label, std::span<const double> f);

  /// Per-sample updates in row order.
  void update_batch(std::span<const int> labels, const Matrix& features);

  /// One update per class present in the batch, using the normalized batch
  /// mean of that class. Classes are visited in ascending label order.
  void update_batch_mean(std::span<const int> labels, const Matrix& features);

  /// Cosine similarity of `f` (unit) with every centroid.
  std::vector<double> similarities(std::span<const double> f) const;
  /// B x C similarity matrix for a batch of unit rows.
  Matrix similarities(const Matrix& features) const;

  friend bool operator==(const CentroidBank&, const CentroidBank&) = default;

 private:
  Matrix centroids_;
  double momentum_;
  double temperature_;
  MomentumConvention convention_;
};

/// Bank whose centroid c is the normalized mean of the rows labeled c.
/// Throws DataError naming every class without samples, DegenerateInputError
/// when a class mean is the zero vector.
CentroidBank init_bank(const Matrix& features, std::span<const int> labels,
                       std::size_t class_count, double momentum, double temperature,
                       MomentumConvention convention = MomentumConvention::old_centroid);

}  // namespace pclreid
