#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pclreid/bank.hpp"
#include "pclreid/checkpoint.hpp"
#include "pclreid/cluster.hpp"
#include "pclreid/config.hpp"
#include "pclreid/dataio.hpp"
#include "pclreid/metrics.hpp"
#include "pclreid/model.hpp"
#include "pclreid/rng.hpp"

namespace pclreid {

// ---------------------------------------------------------------------------
// Batch sampling

/// P x K identity sampler over a label vector. Labels < 0 are never drawn.
class PkSampler {
 public:
  explicit PkSampler(std::span<const int> labels);

  std::size_t class_count() const noexcept { return members_.size(); }

  /// P distinct identities chosen uniformly, then K rows per identity: without
  /// replacement when the identity has >= K rows, with replacement otherwise.
  /// Row indices are grouped by identity in draw order. UsageError when fewer
  /// than P identities are available.
  std::vector<std::size_t> sample(std::size_t p, std::size_t k, Rng& rng) const;

 private:
  std::vector<std::vector<std::size_t>> members_;  // eligible identities, ascending label
};

std::vector<std::size_t> pk_sample(std::span<const int> labels, std::size_t p, std::size_t k,
                                   Rng& rng);

// ---------------------------------------------------------------------------
// Learning-rate schedule

/// step:   1 before epoch 20, 0.1 in [20, 40), 0.01 from 40.
/// warmup: linear from 0.01 at epoch 0 toward 1 at epoch 10, then the step rule.
double lr_multiplier(std::size_t epoch, Schedule schedule);
double learning_rate(std::size_t epoch, const TrainConfig& config);

// ---------------------------------------------------------------------------
// Instrumentation

enum class TrainPhase {
  batch_sampled,   ///< batch indices drawn
  loss_computed,   ///< losses and gradients evaluated against the current bank
  optimizer_step,  ///< parameters updated
  bank_updated,    ///< momentum update applied (skipped with a fixed bank)
  epoch_end,
};

struct TrainEvent {
  TrainPhase phase;
  std::size_t epoch = 0;
  std::size_t iteration = 0;
  /// Rows of the training dataset in this batch (batch phases only).
  std::span<const std::size_t> batch;
  const CentroidBank* bank = nullptr;
};

struct EpochMetrics;

struct TrainOptions {
  /// Per-epoch retrieval evaluation; both sets need labels and cameras.
  std::optional<LabeledDataset> eval_query;
  std::optional<LabeledDataset> eval_gallery;
  /// Replaces the training features at the start of an epoch (same rows and
  /// labels). Used to simulate feature drift; the bank is not re-initialized.
  std::function<std::optional<LabeledDataset>(std::size_t epoch)> epoch_data;
  std::function<void(const TrainEvent&)> on_event;
  std::function<void(const EpochMetrics&)> on_epoch;
  /// Receives one human-readable line per notable event (warnings, progress).
  std::function<void(std::string_view)> log;
};

// ---------------------------------------------------------------------------
// Results

struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0.0;
  bool skipped = false;
  /// Mean over the epoch's iterations, one entry per enabled loss in the
  /// order pcl, id, tri.
  std::vector<std::pair<std::string, double>> losses;
  std::optional<std::size_t> cluster_count;
  std::optional<double> purity;
  std::optional<double> mAP;
  std::optional<double> rank1;
};

/// Tab-separated, one line per epoch after a '#' header line.
std::string format_metrics_log(std::span<const EpochMetrics> log);

struct TrainResult {
  EncoderHead head;
  std::optional<CentroidBank> bank;
  std::optional<Matrix> classifier;
  std::vector<EpochMetrics> log;
  RngState rng{};
  std::size_t epochs_completed = 0;
  std::optional<ClusterAssignment> last_clusters;

  Checkpoint checkpoint() const;
};

/// Supervised fine-tuning. The bank is initialized once from eval-mode
/// features of the whole training set; every iteration then samples a PK
/// batch, evaluates the enabled losses against the pre-update bank, takes an
/// SGD step, and finally applies the momentum update for each batch sample in
/// row order (unless fixed_bank is set).
TrainResult train_supervised(const LabeledDataset& train, const TrainConfig& config,
                             const TrainOptions& options = {});

/// Clustering-based training. Each epoch embeds every sample in eval mode,
/// clusters with cosine DBSCAN, drops noise, re-initializes the bank from
/// the cluster means and runs the supervised iterations on pseudo labels.
/// Ground-truth labels, when present, are used only for the purity metric.
/// freeze_layer1 defaults to on. Epochs with fewer than two clusters are
/// skipped; three consecutive skips raise DataError.
TrainResult train_unsupervised(const LabeledDataset& train, const TrainConfig& config,
                               const TrainOptions& options = {});

/// One learned unit vector per identity, optimized with i2t + t2i against a
/// frozen encoder.
struct IdVectorTable {
  Matrix vectors;  ///< C x d, unit rows
  std::vector<double> loss_trace;  ///< per step
};

/// Embeds `train` once with the frozen head, initializes one random unit
/// vector per identity, and runs SGD on the summed i2t and t2i losses over PK
/// batches, re-normalizing every vector after each step. The head is only read.
IdVectorTable learn_centroids_stage1(const LabeledDataset& train, const EncoderHead& head,
                                     const TrainConfig& config);

/// Embeds `query` and `gallery` with the head (eval mode) and evaluates retrieval.
/// Camera filtering needs camera ids on both sides and is skipped otherwise.
EvalReport evaluate_head(const EncoderHead& head, const LabeledDataset& query,
                         const LabeledDataset& gallery, bool camera_filtering);

/// Deterministic seeds for the parts of a run that draw randomness.
std::uint64_t head_seed(std::uint64_t seed);

/// The head a training run starts from: EncoderHead::init(dims, head_seed(seed)),
/// with BNNeck statistics calibrated on `features` when config.calibrate_bn is set.
EncoderHead initial_head(const Matrix& features, const TrainConfig& config);

}  // namespace pclreid
