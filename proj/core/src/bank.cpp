#include "pclreid/bank.hpp"

#include <cmath>
#include <string>

#include "pclreid/errors.hpp"
#include "pclreid/numerics.hpp"

namespace pclreid {

namespace {

void check_params(double momentum, double temperature) {
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw ConfigError("mu", "must lie in [0, 1]");
  if (!(temperature > 0.0)) throw ConfigError("tau", "must be positive");
}

}  // namespace

CentroidBank::CentroidBank(Matrix centroids, double momentum, double temperature,
                           MomentumConvention convention)
    : centroids_(std::move(centroids)),
      momentum_(momentum),
      temperature_(temperature),
      convention_(convention) {
  check_params(momentum, temperature);
  if (centroids_.rows() == 0) throw UsageError("centroid bank needs at least one class");
  for (std::size_t j = 0; j < centroids_.rows(); ++j) {
    const double norm = std::sqrt(squared_norm(centroids_.row(j)));
    if (std::abs(norm - 1.0) > 1e-10) {
      throw UsageError("centroid " + std::to_string(j) + " is not unit norm");
    }
  }
}

void CentroidBank::update(std::size_t label, std::span<const double> f) {
  if (label >= class_count()) {
    throw UsageError("bank update: label " + std::to_string(label) + " out of range [0, " +
                     std::to_string(class_count()) + ")");
  }
  if (f.size() != dim()) throw ShapeError("bank update: feature width mismatch");
  const double keep = convention_ == MomentumConvention::old_centroid ? momentum_ : 1.0 - momentum_;
  if (keep == 1.0) return;
  auto c = centroids_.row(label);
  std::vector<double> mixed(c.size());
  for (std::size_t k = 0; k < c.size(); ++k) mixed[k] = keep * c[k] + (1.0 - keep) * f[k];
  const auto unit = l2_normalize(mixed);
  std::copy(unit.begin(), unit.end(), c.begin());
}

void CentroidBank::update_batch(std::span<const int> labels, const Matrix& features) {
  if (labels.size() != features.rows()) throw ShapeError("bank update: label count mismatch");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) throw UsageError("bank update: negative label");
    update(static_cast<std::size_t>(labels[i]), features.row(i));
  }
}

void CentroidBank::update_batch_mean(std::span<const int> labels, const Matrix& features) {
  if (labels.size() != features.rows()) throw ShapeError("bank update: label count mismatch");
  Matrix sums(class_count(), dim());
  std::vector<std::size_t> counts(class_count(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_count()) {
      throw UsageError("bank update: label " + std::to_string(labels[i]) + " out of range");
    }
    axpy(1.0, features.row(i), sums.row(static_cast<std::size_t>(labels[i])));
    ++counts[static_cast<std::size_t>(labels[i])];
  }
  for (std::size_t c = 0; c < class_count(); ++c) {
    if (counts[c] == 0) continue;
    update(c, l2_normalize(sums.row(c)));
  }
}

std::vector<double> CentroidBank::similarities(std::span<const double> f) const {
  if (f.size() != dim()) throw ShapeError("similarities: feature width mismatch");
  std::vector<double> out(class_count());
  for (std::size_t j = 0; j < class_count(); ++j) out[j] = dot(centroids_.row(j), f);
  return out;
}

Matrix CentroidBank::similarities(const Matrix& features) const {
  if (features.cols() != dim()) throw ShapeError("similarities: feature width mismatch");
  return matmul_nt(features, centroids_);
}

CentroidBank init_bank(const Matrix& features, std::span<const int> labels,
                       std::size_t class_count, double momentum, double temperature,
                       MomentumConvention convention) {
  check_params(momentum, temperature);
  if (labels.size() != features.rows()) throw ShapeError("init_bank: label count mismatch");
  if (class_count == 0) throw UsageError("init_bank: class count must be >= 1");
  Matrix sums(class_count, features.cols());
  std::vector<std::size_t> counts(class_count, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_count) {
      throw UsageError("init_bank: label " + std::to_string(labels[i]) + " outside [0, " +
                       std::to_string(class_count) + ")");
    }
    axpy(1.0, features.row(i), sums.row(static_cast<std::size_t>(labels[i])));
    ++counts[static_cast<std::size_t>(labels[i])];
  }
  std::string empty;
  for (std::size_t c = 0; c < class_count; ++c) {
    if (counts[c] == 0) empty += (empty.empty() ? "" : ", ") + std::to_string(c);
  }
  if (!empty.empty()) throw DataError("init_bank: no samples for class(es) " + empty);

  Matrix centroids(class_count, features.cols());
  for (std::size_t c = 0; c < class_count; ++c) {
    auto mean = sums.row(c);
    for (double& v : mean) v /= static_cast<double>(counts[c]);
    if (!(squared_norm(mean) > 0.0)) {
      throw DegenerateInputError("init_bank: class " + std::to_string(c) + " has a zero mean");
    }
    const auto unit = l2_normalize(mean);
    std::copy(unit.begin(), unit.end(), centroids.row(c).begin());
  }
  return CentroidBank(std::move(centroids), momentum, temperature, convention);
}

}  // namespace pclreid
