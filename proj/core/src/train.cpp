#include "pclreid/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pclreid/errors.hpp"
#include "pclreid/losses.hpp"
#include "pclreid/numerics.hpp"
#include "pclreid/optim.hpp"

namespace pclreid {

namespace {

constexpr std::uint64_t kHeadStream = 0x4845;
constexpr std::uint64_t kBatchStream = 0x4241;
constexpr std::uint64_t kClassifierStream = 0x4944;
constexpr std::uint64_t kStage1Stream = 0x5331;
constexpr std::size_t kMaxEmptyEpochs = 3;

struct RunState {
  EncoderHead head;
  std::optional<CentroidBank> bank;
  std::optional<Matrix> classifier;
  Rng rng;
};

struct LossTotals {
  double pcl = 0.0, id = 0.0, tri = 0.0;
};

void emit(const TrainOptions& opt, TrainPhase phase, std::size_t epoch, std::size_t iter,
          std::span<const std::size_t> batch, const CentroidBank* bank) {
  if (opt.on_event) opt.on_event(TrainEvent{phase, epoch, iter, batch, bank});
}

void say(const TrainOptions& opt, const std::string& line) {
  if (opt.log) opt.log(line);
}

Matrix init_classifier(std::size_t dim, std::size_t classes, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, kClassifierStream);
  Matrix w(dim, classes);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  for (double& v : w.values()) v = rng.uniform_symmetric(bound);
  return w;
}

EncoderHead make_head(const LabeledDataset& data, const TrainConfig& config, bool freeze_default) {
  EncoderHead head =
      EncoderHead::init({data.dim(), config.hidden_dim, config.projection_dim}, head_seed(config.seed));
  head.set_freeze_layer1(config.freeze_layer1.value_or(freeze_default));
  head.set_freeze_projection(config.freeze_projection);
  return head;
}

/// One epoch of iterations over a labeled view of the data.
/// `labels[i]` is the (pseudo) label of `rows[i]`; `rows` maps into `features`.
/// A collapsed or overflowed encoder output during training is a numeric abort.
EncoderOutput forward_or_abort(EncoderHead& head, const Matrix& x, std::size_t epoch, std::size_t it) {
  try {
    return encoder_forward(head, x, Mode::train);
  } catch (const DegenerateInputError& e) {
    throw NumericError("encoder output degenerate at epoch " + std::to_string(epoch) + " iteration " +
                       std::to_string(it) + ": " + e.what());
  }
}

void run_epoch(RunState& s, const Matrix& features, std::span<const std::size_t> rows,
               std::span<const int> labels, const TrainConfig& config, std::size_t epoch,
               double lr, std::size_t ids_per_batch, const TrainOptions& opt, LossTotals& totals) {
  const LossWeights& w = config.losses;
  const PkSampler sampler(labels);
  std::vector<std::size_t> batch_rows;
  std::vector<int> batch_labels;
  for (std::size_t it = 0; it < config.iters_per_epoch; ++it) {
    const auto picks = sampler.sample(ids_per_batch, config.instances_per_id, s.rng);
    batch_rows.resize(picks.size());
    batch_labels.resize(picks.size());
    for (std::size_t i = 0; i < picks.size(); ++i) {
      batch_rows[i] = rows[picks[i]];
      batch_labels[i] = labels[picks[i]];
    }
    emit(opt, TrainPhase::batch_sampled, epoch, it, batch_rows, s.bank ? &*s.bank : nullptr);

    const Matrix x = gather_rows(features, batch_rows);
    EncoderOutput out = forward_or_abort(s.head, x, epoch, it);
    Matrix grad(out.features.rows(), out.features.cols());
    double total = 0.0;
    std::optional<Matrix> classifier_grad;
    if (w.pcl > 0.0) {
      LossResult r = pcl_loss(*s.bank, out.features, batch_labels);
      axpy(w.pcl, r.grad.values(), grad.values());
      totals.pcl += r.value;
      total += w.pcl * r.value;
    }
    if (w.id > 0.0) {
      IdLossResult r = id_loss(*s.classifier, out.features, batch_labels, config.label_smoothing);
      axpy(w.id, r.grad_features.values(), grad.values());
      for (double& g : r.grad_classifier.values()) g *= w.id;
      classifier_grad = std::move(r.grad_classifier);
      totals.id += r.value;
      total += w.id * r.value;
    }
    if (w.triplet > 0.0) {
      LossResult r = triplet_loss(out.features, batch_labels, config.triplet_margin);
      axpy(w.triplet, r.grad.values(), grad.values());
      totals.tri += r.value;
      total += w.triplet * r.value;
    }
    if (!std::isfinite(total)) {
      throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " iteration " +
                         std::to_string(it));
    }
    emit(opt, TrainPhase::loss_computed, epoch, it, batch_rows, s.bank ? &*s.bank : nullptr);

    const ParamGrads pg = encoder_backward(s.head, out.cache, grad);
    if (classifier_grad) {
      sgd_step(s.classifier->values(), classifier_grad->values(), lr, config.weight_decay,
               "classifier");
    }
    apply_sgd(s.head, pg, lr, config.weight_decay);
    emit(opt, TrainPhase::optimizer_step, epoch, it, batch_rows, s.bank ? &*s.bank : nullptr);

    if (w.pcl > 0.0 && !config.fixed_bank) {
      if (config.bank_update == BankUpdate::per_sample) {
        s.bank->update_batch(batch_labels, out.features);
      } else {
        s.bank->update_batch_mean(batch_labels, out.features);
      }
      emit(opt, TrainPhase::bank_updated, epoch, it, batch_rows, &*s.bank);
    }
  }
}

void record_losses(EpochMetrics& m, const LossWeights& w, const LossTotals& t, std::size_t iters) {
  const double n = static_cast<double>(iters);
  if (w.pcl > 0.0) m.losses.emplace_back("pcl", t.pcl / n);
  if (w.id > 0.0) m.losses.emplace_back("id", t.id / n);
  if (w.triplet > 0.0) m.losses.emplace_back("tri", t.tri / n);
}

void maybe_evaluate(EpochMetrics& m, const EncoderHead& head, const TrainConfig& config,
                    const TrainOptions& opt) {
  if (!opt.eval_query || !opt.eval_gallery) return;
  const EvalReport r = evaluate_head(head, *opt.eval_query, *opt.eval_gallery, config.camera_filtering);
  m.mAP = r.mAP;
  m.rank1 = r.rank1;
}

void check_encoder_losses(const LossWeights& w) {
  if (w.i2t > 0.0 || w.t2i > 0.0) {
    throw ConfigError("loss", "i2t and t2i train per-identity vectors; use stage-1 training");
  }
}

void check_supervised_input(const LabeledDataset& data, const char* who) {
  if (!data.has_labels()) {
    throw DataError(std::string(who) + ": training data has no identity labels");
  }
  if (data.size() < 2) throw DataError(std::string(who) + ": need at least two samples");
}

}  // namespace

// ---------------------------------------------------------------------------

PkSampler::PkSampler(std::span<const int> labels) {
  int max_label = -1;
  for (int y : labels) max_label = std::max(max_label, y);
  std::vector<std::vector<std::size_t>> by_label(static_cast<std::size_t>(max_label + 1));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0) by_label[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  for (auto& m : by_label) {
    if (!m.empty()) members_.push_back(std::move(m));
  }
}

std::vector<std::size_t> PkSampler::sample(std::size_t p, std::size_t k, Rng& rng) const {
  if (p > members_.size()) {
    throw UsageError("pk_sample: " + std::to_string(p) + " identities requested but only " +
                     std::to_string(members_.size()) + " available");
  }
  std::vector<std::size_t> classes(members_.size());
  for (std::size_t i = 0; i < classes.size(); ++i) classes[i] = i;
  std::vector<std::size_t> out;
  out.reserve(p * k);
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < p; ++i) {
    const std::size_t j = i + rng.uniform_index(classes.size() - i);
    std::swap(classes[i], classes[j]);
    const auto& rows = members_[classes[i]];
    if (rows.size() >= k) {
      pool = rows;
      for (std::size_t t = 0; t < k; ++t) {
        const std::size_t u = t + rng.uniform_index(pool.size() - t);
        std::swap(pool[t], pool[u]);
        out.push_back(pool[t]);
      }
    } else {
      for (std::size_t t = 0; t < k; ++t) out.push_back(rows[rng.uniform_index(rows.size())]);
    }
  }
  return out;
}

std::vector<std::size_t> pk_sample(std::span<const int> labels, std::size_t p, std::size_t k,
                                   Rng& rng) {
  return PkSampler(labels).sample(p, k, rng);
}

double lr_multiplier(std::size_t epoch, Schedule schedule) {
  if (schedule == Schedule::warmup && epoch < 10) {
    return 0.01 + (1.0 - 0.01) * static_cast<double>(epoch) / 10.0;
  }
  if (epoch < 20) return 1.0;
  if (epoch < 40) return 0.1;
  return 0.01;
}

double learning_rate(std::size_t epoch, const TrainConfig& config) {
  return config.base_lr * lr_multiplier(epoch, config.schedule);
}

std::uint64_t head_seed(std::uint64_t seed) {
  std::uint64_t s = seed ^ kHeadStream;
  return splitmix64(s);
}

EncoderHead initial_head(const Matrix& features, const TrainConfig& config) {
  EncoderHead head = EncoderHead::init({features.cols(), config.hidden_dim, config.projection_dim},
                                       head_seed(config.seed));
  if (config.calibrate_bn) calibrate_batch_norm(head, features);
  return head;
}

std::string format_metrics_log(std::span<const EpochMetrics> log) {
  std::string out = "# epoch\tlr";
  if (!log.empty()) {
    for (const auto& [name, value] : log.front().losses) out += "\tloss_" + name;
    if (log.front().cluster_count) out += "\tclusters";
    if (log.front().purity) out += "\tpurity";
    if (log.front().mAP) out += "\tmAP\trank1";
  }
  out += "\n";
  char buf[64];
  for (const auto& m : log) {
    std::snprintf(buf, sizeof buf, "%zu\t%.6g", m.epoch, m.lr);
    out += buf;
    for (const auto& [name, value] : m.losses) {
      std::snprintf(buf, sizeof buf, "\t%.6f", value);
      out += m.skipped ? "\t-" : buf;
    }
    if (m.cluster_count) out += "\t" + std::to_string(*m.cluster_count);
    if (m.purity) {
      std::snprintf(buf, sizeof buf, "\t%.4f", *m.purity);
      out += buf;
    }
    if (m.mAP && m.rank1) {
      std::snprintf(buf, sizeof buf, "\t%.4f\t%.4f", *m.mAP, *m.rank1);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

Checkpoint TrainResult::checkpoint() const {
  Checkpoint c;
  c.head = head;
  c.epoch = epochs_completed;
  c.rng = rng;
  c.bank = bank;
  c.classifier = classifier;
  return c;
}

EvalReport evaluate_head(const EncoderHead& head, const LabeledDataset& query,
                         const LabeledDataset& gallery, bool camera_filtering) {
  if (!query.has_labels() || !gallery.has_labels()) {
    throw DataError("evaluation sets need identity labels");
  }
  auto cams = [](const LabeledDataset& d) {
    return d.has_cameras() ? d.cameras : std::vector<int>(d.size(), 0);
  };
  EvalSet q{encoder_embed(head, query.features), query.labels, cams(query)};
  EvalSet g{encoder_embed(head, gallery.features), gallery.labels, cams(gallery)};
  return evaluate(q, g, camera_filtering && query.has_cameras() && gallery.has_cameras());
}

TrainResult train_supervised(const LabeledDataset& train, const TrainConfig& config,
                             const TrainOptions& opt) {
  config.validate();
  check_encoder_losses(config.losses);
  check_supervised_input(train, "train_supervised");
  const std::size_t classes = train.class_count();

  RunState s{make_head(train, config, false), std::nullopt, std::nullopt,
             Rng::derive(config.seed, kBatchStream)};
  if (config.calibrate_bn) calibrate_batch_norm(s.head, train.features);
  if (config.losses.pcl > 0.0) {
    s.bank = init_bank(encoder_embed(s.head, train.features), train.labels, classes,
                       config.momentum, config.temperature, config.momentum_convention);
  }
  if (config.losses.id > 0.0) {
    s.classifier = init_classifier(s.head.dims().output(), classes, config.seed);
  }

  std::vector<std::size_t> rows(train.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;

  TrainResult result;
  Matrix features = train.features;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (opt.epoch_data) {
      if (auto fresh = opt.epoch_data(epoch)) {
        if (fresh->size() != train.size() || fresh->dim() != train.dim() ||
            fresh->labels != train.labels) {
          throw DataError("epoch_data must keep rows, width and labels unchanged");
        }
        features = std::move(fresh->features);
      }
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.lr = learning_rate(epoch, config);
    LossTotals totals;
    run_epoch(s, features, rows, train.labels, config, epoch, m.lr, config.ids_per_batch, opt,
              totals);
    record_losses(m, config.losses, totals, config.iters_per_epoch);
    maybe_evaluate(m, s.head, config, opt);
    if (opt.on_epoch) opt.on_epoch(m);
    result.log.push_back(m);
    emit(opt, TrainPhase::epoch_end, epoch, 0, {}, s.bank ? &*s.bank : nullptr);
  }
  result.head = std::move(s.head);
  result.bank = std::move(s.bank);
  result.classifier = std::move(s.classifier);
  result.rng = s.rng.state();
  result.epochs_completed = config.epochs;
  return result;
}

TrainResult train_unsupervised(const LabeledDataset& train, const TrainConfig& config,
                               const TrainOptions& opt) {
  config.validate();
  check_encoder_losses(config.losses);
  if (config.losses.id > 0.0) {
    throw ConfigError("loss", "the id loss needs fixed identities; use pcl and/or tri when "
                              "training without labels");
  }
  if (train.size() < 2) throw DataError("train_unsupervised: need at least two samples");

  RunState s{make_head(train, config, true), std::nullopt, std::nullopt,
             Rng::derive(config.seed, kBatchStream)};
  TrainResult result;
  std::size_t empty_streak = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    EpochMetrics m;
    m.epoch = epoch;
    m.lr = learning_rate(epoch, config);

    if (config.calibrate_bn) calibrate_batch_norm(s.head, train.features);
    const Matrix embedded = encoder_embed(s.head, train.features);
    ClusterAssignment clusters = cosine_dbscan(embedded, config.eps, config.min_samples);
    m.cluster_count = clusters.cluster_count;
    if (train.has_labels()) m.purity = cluster_purity(clusters, train.labels).value;

    LossTotals totals;
    if (clusters.cluster_count < 2) {
      ++empty_streak;
      say(opt, "warning: epoch " + std::to_string(epoch) + " found " +
                   std::to_string(clusters.cluster_count) + " cluster(s); skipping");
      if (empty_streak >= kMaxEmptyEpochs) {
        throw DataError("clustering produced no usable clusters for " +
                        std::to_string(kMaxEmptyEpochs) + " consecutive epochs");
      }
      m.skipped = true;
    } else {
      empty_streak = 0;
      std::vector<std::size_t> rows;
      std::vector<int> pseudo;
      for (std::size_t i = 0; i < clusters.labels.size(); ++i) {
        if (clusters.labels[i] == kNoise) continue;
        rows.push_back(i);
        pseudo.push_back(clusters.labels[i]);
      }
      if (config.losses.pcl > 0.0) {
        s.bank = init_bank(gather_rows(embedded, rows), pseudo, clusters.cluster_count,
                           config.momentum, config.temperature, config.momentum_convention);
      }
      const std::size_t p = std::min(config.ids_per_batch, clusters.cluster_count);
      run_epoch(s, train.features, rows, pseudo, config, epoch, m.lr, p, opt, totals);
    }
    record_losses(m, config.losses, totals, config.iters_per_epoch);
    maybe_evaluate(m, s.head, config, opt);
    if (opt.on_epoch) opt.on_epoch(m);
    result.log.push_back(m);
    result.last_clusters = std::move(clusters);
    emit(opt, TrainPhase::epoch_end, epoch, 0, {}, s.bank ? &*s.bank : nullptr);
  }
  result.head = std::move(s.head);
  result.bank = std::move(s.bank);
  result.rng = s.rng.state();
  result.epochs_completed = config.epochs;
  return result;
}

IdVectorTable learn_centroids_stage1(const LabeledDataset& train, const EncoderHead& head,
                                     const TrainConfig& config) {
  config.validate();
  check_supervised_input(train, "learn_centroids_stage1");
  const std::size_t classes = train.class_count();
  const Matrix features = encoder_embed(head, train.features);
  const std::size_t d = features.cols();

  Rng rng = Rng::derive(config.seed, kStage1Stream);
  IdVectorTable table;
  table.vectors = Matrix(classes, d);
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<double> v(d);
    for (double& x : v) x = rng.normal();
    const auto unit = l2_normalize(v);
    std::copy(unit.begin(), unit.end(), table.vectors.row(c).begin());
  }

  const PkSampler sampler(train.labels);
  const std::size_t p = std::min(config.ids_per_batch, sampler.class_count());
  const std::size_t steps =
      config.stage1_steps > 0 ? config.stage1_steps : (120 * classes + p - 1) / p;
  std::vector<int> batch_labels;
  for (std::size_t step = 0; step < steps; ++step) {
    const auto rows = sampler.sample(p, config.instances_per_id, rng);
    const Matrix fb = gather_rows(features, rows);
    batch_labels.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) batch_labels[i] = train.labels[rows[i]];
    LossResult a = i2t_loss(table.vectors, fb, batch_labels, config.stage1_temperature);
    const LossResult b = t2i_loss(table.vectors, fb, batch_labels, config.stage1_temperature);
    axpy(1.0, b.grad.values(), a.grad.values());
    const double loss = a.value + b.value;
    if (!std::isfinite(loss)) throw NumericError("non-finite stage-1 loss at step " + std::to_string(step));
    table.loss_trace.push_back(loss);
    sgd_step(table.vectors.values(), a.grad.values(), config.stage1_lr, 0.0, "id_vectors");
    for (std::size_t c = 0; c < classes; ++c) {
      const auto unit = l2_normalize(table.vectors.row(c));
      std::copy(unit.begin(), unit.end(), table.vectors.row(c).begin());
    }
  }
  return table;
}

}  // namespace pclreid
