#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pclreid/bank.hpp"
#include "pclreid/losses.hpp"
#include "pclreid/model.hpp"

namespace pclreid {

enum class Schedule { step, warmup };
enum class BankUpdate { per_sample, batch_mean };

/// Every training hyperparameter. Defaults follow the reference fine-tuning
/// recipe (SGD, lr 3.5e-4, weight decay 5e-4, 50 epochs x 200 iterations,
/// 16 identities x 4 instances per batch).
struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t iters_per_epoch = 200;
  std::size_t ids_per_batch = 16;     ///< P
  std::size_t instances_per_id = 4;   ///< K
  double base_lr = 3.5e-4;
  double weight_decay = 5e-4;
  Schedule schedule = Schedule::step;

  double momentum = 0.2;      ///< bank momentum mu
  double temperature = 0.05;  ///< tau
  MomentumConvention momentum_convention = MomentumConvention::old_centroid;
  BankUpdate bank_update = BankUpdate::per_sample;
  bool fixed_bank = false;

  LossWeights losses;
  double label_smoothing = 0.1;
  double triplet_margin = 0.3;

  double eps = 0.5;
  std::size_t min_samples = 4;

  std::uint64_t seed = 0;
  /// Unset means "mode default": off for supervised, on for unsupervised training.
  std::optional<bool> freeze_layer1;
  bool freeze_projection = false;
  /// Reset BNNeck running statistics to training-set population statistics
  /// before the trainer embeds the whole set (bank init, clustering).
  bool calibrate_bn = true;
  std::size_t hidden_dim = 64;
  std::size_t projection_dim = 32;

  double stage1_lr = 3.5e-4;
  /// Temperature of the stage-1 i2t/t2i losses.
  double stage1_temperature = 0.05;
  /// 0 means 120 * C / P steps (about 120 batch appearances per identity).
  std::size_t stage1_steps = 0;

  bool camera_filtering = true;

  LossConfig loss_config() const;
  /// Throws ConfigError naming the first invalid key.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Names of every accepted key, in serialization order.
const std::vector<std::string>& config_keys();

/// Sets one key from its textual value (ConfigError on unknown key, type
/// mismatch or out-of-range value). Does not run cross-field validation.
void set_config_value(TrainConfig& config, const std::string& key, const std::string& value);

/// Line-based "key = value" text; '#' starts a comment, blank lines are
/// ignored. Starts from `base` (defaults when omitted) and validates the result.
TrainConfig parse_config(const std::string& text, const TrainConfig& base = {});
TrainConfig parse_config_file(const std::filesystem::path& path, const TrainConfig& base = {});

/// Every key, one per line, parseable by parse_config.
std::string serialize_config(const TrainConfig& config);

std::string to_string(Schedule s);
std::string to_string(BankUpdate b);
std::string to_string(MomentumConvention c);

}  // namespace pclreid
