#include "pclreid/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "pclreid/errors.hpp"
#include "pclreid/numerics.hpp"

namespace pclreid {

namespace {

void check_batch(const Matrix& features, std::span<const int> labels, const char* who) {
  if (features.rows() != labels.size()) {
    throw ShapeError(std::string(who) + ": " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(features.rows()) + " feature rows");
  }
  if (features.rows() == 0) throw UsageError(std::string(who) + ": empty batch");
}

void check_labels(std::span<const int> labels, std::size_t class_count, const char* who,
                  const char* missing) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_count) {
      throw UsageError(std::string(who) + ": sample " + std::to_string(i) + " has label " +
                       std::to_string(labels[i]) + " with no " + missing + " (have " +
                       std::to_string(class_count) + ")");
    }
  }
}

/// -log softmax(s / tau)[target] together with the softmax itself.
double softmax_nll(std::span<const double> scores, std::size_t target, double tau,
                   std::vector<double>& probs) {
  const double peak = *std::max_element(scores.begin(), scores.end());
  probs.resize(scores.size());
  double total = 0.0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    probs[j] = std::exp((scores[j] - peak) / tau);
    total += probs[j];
  }
  for (double& p : probs) p /= total;
  return (peak - scores[target]) / tau + std::log(total);
}

/// Shared core of the two batch-contrastive losses. `score(i, j)` is the
/// similarity of anchor i with candidate j; `accumulate(i, j, coeff)` adds
/// coeff * d score(i, j) to the id-vector gradient.
template <typename Score, typename Accumulate>
double batch_contrastive(std::span<const int> labels, double tau, Score score,
                         Accumulate accumulate) {
  const std::size_t b = labels.size();
  std::vector<double> s(b);
  std::vector<double> probs;
  double total_loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) s[j] = score(i, j);
    const double lse = log_sum_exp(s, tau);
    probs = softmax_stable(s, tau);
    std::size_t positives = 0;
    double pos_sum = 0.0;
    for (std::size_t k = 0; k < b; ++k) {
      if (labels[k] == labels[i]) {
        ++positives;
        pos_sum += s[k] / tau - lse;
      }
    }
    const double inv_pos = 1.0 / static_cast<double>(positives);
    total_loss += -pos_sum * inv_pos;
    for (std::size_t j = 0; j < b; ++j) {
      const double target = labels[j] == labels[i] ? inv_pos : 0.0;
      accumulate(i, j, (probs[j] - target) / tau);
    }
  }
  return total_loss / static_cast<double>(b);
}

}  // namespace

LossWeights parse_loss_weights(const std::string& text) {
  LossWeights w{0.0, 0.0, 0.0, 0.0, 0.0};
  std::stringstream ss(text);
  std::string item;
  bool any = false;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    double weight = 1.0;
    std::string name = item;
    if (const auto colon = item.find(':'); colon != std::string::npos) {
      name = item.substr(0, colon);
      const std::string value = item.substr(colon + 1);
      std::size_t used = 0;
      try {
        weight = std::stod(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != value.size() || value.empty()) {
        throw ConfigError("loss", "bad weight '" + value + "' for " + name);
      }
      if (!(weight >= 0.0) || !std::isfinite(weight)) {
        throw ConfigError("loss", "weight for " + name + " must be finite and >= 0");
      }
    }
    if (name == "pcl") w.pcl = weight;
    else if (name == "id") w.id = weight;
    else if (name == "tri") w.triplet = weight;
    else if (name == "i2t") w.i2t = weight;
    else if (name == "t2i") w.t2i = weight;
    else throw ConfigError("loss", "unknown loss '" + name + "' (expected pcl, id, tri, i2t, t2i)");
    any = true;
  }
  if (!any) throw ConfigError("loss", "no loss listed");
  return w;
}

std::string format_loss_weights(const LossWeights& w) {
  std::ostringstream os;
  os.precision(17);
  bool first = true;
  auto emit = [&](const char* name, double weight) {
    if (weight <= 0.0) return;
    os << (first ? "" : ",") << name;
    if (weight != 1.0) os << ':' << weight;
    first = false;
  };
  emit("pcl", w.pcl);
  emit("id", w.id);
  emit("tri", w.triplet);
  emit("i2t", w.i2t);
  emit("t2i", w.t2i);
  return os.str();
}

void LossConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("tau", "must be positive");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw ConfigError("label-smoothing", "must lie in [0, 1)");
  }
  if (!(triplet_margin >= 0.0)) throw ConfigError("margin", "must be >= 0");
  if (!weights.any_enabled()) throw ConfigError("loss", "at least one loss must be enabled");
}

LossResult pcl_loss(const CentroidBank& bank, const Matrix& features, std::span<const int> labels) {
  check_batch(features, labels, "pcl_loss");
  check_labels(labels, bank.class_count(), "pcl_loss", "centroid");
  if (features.cols() != bank.dim()) throw ShapeError("pcl_loss: feature width != bank width");

  const double tau = bank.temperature();
  const double inv_b = 1.0 / static_cast<double>(features.rows());
  LossResult out{0.0, Matrix(features.rows(), features.cols())};
  std::vector<double> probs;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto s = bank.similarities(features.row(i));
    const auto y = static_cast<std::size_t>(labels[i]);
    out.value += softmax_nll(s, y, tau, probs);
    auto g = out.grad.row(i);
    for (std::size_t j = 0; j < s.size(); ++j) {
      const double coeff = (probs[j] - (j == y ? 1.0 : 0.0)) / tau * inv_b;
      axpy(coeff, bank.centroid(j), g);
    }
  }
  out.value *= inv_b;
  return out;
}

IdLossResult id_loss(const Matrix& classifier, const Matrix& features, std::span<const int> labels,
                     double smoothing) {
  check_batch(features, labels, "id_loss");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) {
    throw ConfigError("label-smoothing", "must lie in [0, 1)");
  }
  if (classifier.rows() != features.cols()) {
    throw ShapeError("id_loss: classifier rows must equal feature width");
  }
  const std::size_t c = classifier.cols();
  check_labels(labels, c, "id_loss", "classifier column");

  const Matrix logits = matmul(features, classifier);
  const double inv_b = 1.0 / static_cast<double>(features.rows());
  const double off = smoothing / static_cast<double>(c);
  const double on = 1.0 - smoothing + off;
  Matrix grad_logits(features.rows(), c);
  double total = 0.0;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto z = logits.row(i);
    const double lse = log_sum_exp(z, 1.0);
    const auto p = softmax_stable(z, 1.0);
    const auto y = static_cast<std::size_t>(labels[i]);
    for (std::size_t k = 0; k < c; ++k) {
      const double q = k == y ? on : off;
      if (q > 0.0) total -= q * (z[k] - lse);
      grad_logits(i, k) = (p[k] - q) * inv_b;
    }
  }
  return {total * inv_b, matmul_nt(grad_logits, classifier), matmul_tn(features, grad_logits)};
}

LossResult triplet_loss(const Matrix& features, std::span<const int> labels, double margin) {
  check_batch(features, labels, "triplet_loss");
  if (!(margin >= 0.0)) throw ConfigError("margin", "must be >= 0");
  const std::size_t b = features.rows();
  const Matrix sim = matmul_nt(features, features);
  const double inv_b = 1.0 / static_cast<double>(b);
  LossResult out{0.0, Matrix(b, features.cols())};
  for (std::size_t a = 0; a < b; ++a) {
    std::size_t pos = b;
    std::size_t neg = b;
    double d_pos = -std::numeric_limits<double>::infinity();
    double d_neg = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < b; ++j) {
      if (j == a) continue;
      const double d = 1.0 - sim(a, j);
      if (labels[j] == labels[a]) {
        if (d > d_pos) {
          d_pos = d;
          pos = j;
        }
      } else if (d < d_neg) {
        d_neg = d;
        neg = j;
      }
    }
    if (pos == b) throw UsageError("triplet_loss: anchor " + std::to_string(a) + " has no positive");
    if (neg == b) throw UsageError("triplet_loss: anchor " + std::to_string(a) + " has no negative");
    const double hinge = margin + d_pos - d_neg;
    if (hinge > 0.0) {
      out.value += hinge;
      // d(a,p) = 1 - f_a.f_p, d(a,n) = 1 - f_a.f_n
      axpy(-inv_b, features.row(pos), out.grad.row(a));
      axpy(inv_b, features.row(neg), out.grad.row(a));
      axpy(-inv_b, features.row(a), out.grad.row(pos));
      axpy(inv_b, features.row(a), out.grad.row(neg));
    }
  }
  out.value *= inv_b;
  return out;
}

LossResult i2t_loss(const Matrix& id_vectors, const Matrix& features, std::span<const int> labels,
                    double temperature) {
  check_batch(features, labels, "i2t_loss");
  check_labels(labels, id_vectors.rows(), "i2t_loss", "id vector");
  if (id_vectors.cols() != features.cols()) throw ShapeError("i2t_loss: id vector width mismatch");
  if (!(temperature > 0.0)) throw ConfigError("tau", "must be positive");
  const double inv_b = 1.0 / static_cast<double>(features.rows());
  LossResult out{0.0, Matrix(id_vectors.rows(), id_vectors.cols())};
  auto row_of = [&](std::size_t j) { return static_cast<std::size_t>(labels[j]); };
  out.value = batch_contrastive(
      labels, temperature,
      [&](std::size_t i, std::size_t j) { return dot(id_vectors.row(row_of(j)), features.row(i)); },
      [&](std::size_t i, std::size_t j, double coeff) {
        axpy(coeff * inv_b, features.row(i), out.grad.row(row_of(j)));
      });
  return out;
}

LossResult t2i_loss(const Matrix& id_vectors, const Matrix& features, std::span<const int> labels,
                    double temperature) {
  check_batch(features, labels, "t2i_loss");
  check_labels(labels, id_vectors.rows(), "t2i_loss", "id vector");
  if (id_vectors.cols() != features.cols()) throw ShapeError("t2i_loss: id vector width mismatch");
  if (!(temperature > 0.0)) throw ConfigError("tau", "must be positive");
  const double inv_b = 1.0 / static_cast<double>(features.rows());
  LossResult out{0.0, Matrix(id_vectors.rows(), id_vectors.cols())};
  auto row_of = [&](std::size_t i) { return static_cast<std::size_t>(labels[i]); };
  out.value = batch_contrastive(
      labels, temperature,
      [&](std::size_t i, std::size_t j) { return dot(id_vectors.row(row_of(i)), features.row(j)); },
      [&](std::size_t i, std::size_t j, double coeff) {
        axpy(coeff * inv_b, features.row(j), out.grad.row(row_of(i)));
      });
  return out;
}

}  // namespace pclreid
