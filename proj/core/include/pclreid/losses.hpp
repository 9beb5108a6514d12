#pragma once

#include <span>
#include <string>

#include "pclreid/bank.hpp"
#include "pclreid/matrix.hpp"

namespace pclreid {

/// Per-loss weights. A weight of zero disables the loss entirely: it is not
/// evaluated and consumes no randomness.
struct LossWeights {
  double pcl = 1.0;
  double id = 0.0;
  double triplet = 0.0;
  double i2t = 0.0;
  double t2i = 0.0;

  bool any_enabled() const noexcept { return pcl > 0 || id > 0 || triplet > 0 || i2t > 0 || t2i > 0; }
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// Parses "pcl,id" (weight 1 each) or "pcl:1,id:0.5". Unlisted losses get 0.
LossWeights parse_loss_weights(const std::string& text);
/// Inverse of parse_loss_weights, listing enabled losses only.
std::string format_loss_weights(const LossWeights& w);

struct LossConfig {
  double temperature = 0.05;
  double label_smoothing = 0.1;
  double triplet_margin = 0.3;
  LossWeights weights;

  /// Throws ConfigError on out-of-range values or when no loss is enabled.
  void validate() const;
};

/// Loss value with the gradient wrt one input (features or id vectors).
struct LossResult {
  double value = 0.0;
  Matrix grad;
};

/// Prototypical contrastive loss against a centroid bank, averaged over the batch:
///   l_i = -log softmax_j(K[j] . f_i / tau)[y_i]
///   dl/df_i = (1/tau) sum_j (p_j - [j == y_i]) K[j] / B
/// The bank is read only. Keeping it fixed (the frozen-centroid variant) or
/// momentum-updating it afterwards is the trainer's job.
LossResult pcl_loss(const CentroidBank& bank, const Matrix& features, std::span<const int> labels);

struct IdLossResult {
  double value = 0.0;
  Matrix grad_features;
  Matrix grad_classifier;
};

/// Cross-entropy of logits = f W (W is d x C) against label-smoothed targets
/// q_y = 1 - eps + eps/C, q_k = eps/C; mean over the batch.
IdLossResult id_loss(const Matrix& classifier, const Matrix& features, std::span<const int> labels,
                     double smoothing);

/// Batch-hard triplet loss with cosine distance d(u, v) = 1 - u.v:
///   l_a = max(0, m + max_p d(a, p) - min_n d(a, n)), mean over anchors.
/// Ties pick the lowest batch index. Every anchor needs another in-batch
/// sample of its label and one of a different label (UsageError otherwise).
LossResult triplet_loss(const Matrix& features, std::span<const int> labels, double margin);

/// Image-to-text contrastive loss with one vector per identity standing in for
/// the text features. For every image i:
///   l_i = -(1/|K_i|) sum_{k in K_i} log exp(T[y_k].f_i/tau) / sum_{j=1..B} exp(T[y_j].f_i/tau)
/// The denominator runs over all B batch entries, duplicates included.
/// Mean over the batch; the gradient is wrt the id_vectors (C x d).
LossResult i2t_loss(const Matrix& id_vectors, const Matrix& features, std::span<const int> labels,
                    double temperature);

/// Text-to-image counterpart, anchored on T[y_i]:
///   l_i = -(1/|K_i|) sum_{k in K_i} log exp(T[y_i].f_k/tau) / sum_{j=1..B} exp(T[y_i].f_j/tau)
LossResult t2i_loss(const Matrix& id_vectors, const Matrix& features, std::span<const int> labels,
                    double temperature);

}  // namespace pclreid
