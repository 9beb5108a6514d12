#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pclreid/matrix.hpp"

namespace pclreid {

enum class Split : std::uint8_t { train = 0, query = 1, gallery = 2 };

/// Samples with optional identity labels and camera ids. `labels` and
/// `cameras` are either empty (absent) or one entry per row; `splits` always
/// has one entry per row.
struct LabeledDataset {
  Matrix features;
  std::vector<int> labels;
  std::vector<int> cameras;
  std::vector<Split> splits;

  std::size_t size() const noexcept { return features.rows(); }
  std::size_t dim() const noexcept { return features.cols(); }
  bool has_labels() const noexcept { return !labels.empty(); }
  bool has_cameras() const noexcept { return !cameras.empty(); }
  /// 1 + largest label; 0 without labels.
  std::size_t class_count() const;

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

/// Rows tagged with `split`, in original order.
LabeledDataset select_split(const LabeledDataset& data, Split split);
/// Rows at `indices`, in the given order.
LabeledDataset select_rows(const LabeledDataset& data, std::span<const std::size_t> indices);

/// Desk-scale identity clusters with per-camera bias.
struct SyntheticSpec {
  std::size_t classes = 32;
  std::size_t samples_per_class = 40;
  std::size_t dim = 64;
  double sigma = 0.15;
  std::size_t cameras = 4;
  double sigma_cam = 0.1;
  double train_fraction = 0.5;
  double query_fraction = 0.25;  ///< gallery takes the remainder
  std::uint64_t seed = 0;
  /// Selects the camera-bias draw; changing it alone re-draws the camera
  /// biases while class means and per-sample noise stay fixed.
  std::uint64_t camera_variant = 0;

  static SyntheticSpec standard(std::uint64_t seed = 0);
  static SyntheticSpec hard(std::uint64_t seed = 0);
};

/// sample = l2_normalize(mean_c + sigma * g + sigma_cam * bias_cam) with class
/// means and camera biases uniform on the unit sphere and g standard normal.
/// Within each class the first samples go to train, then query, then gallery.
/// Cameras rotate within each block so every identity is seen by several
/// cameras and each query has a gallery match from another camera.
/// Throws ConfigError for invalid generator settings or an infeasible split.
LabeledDataset gen_synthetic(const SyntheticSpec& spec);

enum class StoragePrecision { f64, f32 };

// PCLF feature file, little-endian:
//   "PCLF" | u32 version (=1) | u32 count | u32 dim | u32 flags
//   | features (count*dim, f64 or f32, row-major)
//   | i32 labels[count]   (flags bit 0)
//   | i32 cameras[count]  (flags bit 1)
// flags bit 2 selects f32 feature storage.

inline constexpr std::uint32_t kFeatureFileVersion = 1;
inline constexpr std::uint32_t kHasLabels = 1u << 0;
inline constexpr std::uint32_t kHasCameras = 1u << 1;
inline constexpr std::uint32_t kFloat32 = 1u << 2;

std::vector<std::uint8_t> encode_features(const LabeledDataset& data,
                                          StoragePrecision precision = StoragePrecision::f64);
/// All rows come back tagged Split::train. f32 payloads are widened to f64.
LabeledDataset decode_features(std::span<const std::uint8_t> bytes);

void write_features(const std::filesystem::path& path, const LabeledDataset& data,
                    StoragePrecision precision = StoragePrecision::f64);
LabeledDataset read_features(const std::filesystem::path& path);

}  // namespace pclreid
