#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "pclreid/bank.hpp"
#include "pclreid/model.hpp"
#include "pclreid/rng.hpp"

namespace pclreid {

/// Training snapshot. Layout of the PCLC container (little-endian):
///
///   "PCLC" | u32 version (=1) | u32 layer count (=2)
///   per layer:  u32 rows (fan_in) | u32 cols (fan_out) | f64 weight[rows*cols] | f64 bias[cols]
///   per BNNeck: u32 dim | f64 scale[dim] | f64 shift[dim] | f64 running_mean[dim]
///               | f64 running_var[dim] | f64 eps | f64 momentum
///   u64 epoch | 4 x u64 RNG state (32 bytes)
///   optional tagged blocks until end of file: 4-byte tag | u64 payload length | payload
///     "BANK": u32 C | u32 d | f64 mu | f64 tau | u32 convention | f64 centroids[C*d]
///     "IDCL": u32 rows | u32 cols | f64 classifier[rows*cols]
struct Checkpoint {
  EncoderHead head;
  std::uint64_t epoch = 0;
  RngState rng{};
  std::optional<CentroidBank> bank;
  std::optional<Matrix> classifier;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// FormatError with the failing byte offset on bad magic, version, lengths or tags.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pclreid
