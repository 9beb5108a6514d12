#include "pclreid/checkpoint.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "pclreid/binary_io.hpp"
#include "pclreid/errors.hpp"

namespace pclreid {

namespace {

constexpr std::uint32_t kLayerCount = 2;
constexpr std::uint32_t kMaxDim = 1u << 24;

void put_layer(ByteWriter& w, const LinearLayer& layer) {
  w.put_u32(static_cast<std::uint32_t>(layer.fan_in()));
  w.put_u32(static_cast<std::uint32_t>(layer.fan_out()));
  w.put_f64s(layer.weight.values());
  w.put_f64s(layer.bias);
}

void put_bn(ByteWriter& w, const BatchNormState& bn) {
  w.put_u32(static_cast<std::uint32_t>(bn.dim()));
  w.put_f64s(bn.scale);
  w.put_f64s(bn.shift);
  w.put_f64s(bn.running_mean);
  w.put_f64s(bn.running_var);
  w.put_f64(bn.eps);
  w.put_f64(bn.momentum);
}

std::uint32_t get_dim(ByteReader& r, const char* what) {
  const std::size_t at = r.offset();
  const std::uint32_t v = r.get_u32();
  if (v == 0 || v > kMaxDim) {
    throw FormatError(at, std::string("implausible ") + what + " " + std::to_string(v));
  }
  return v;
}

LinearLayer get_layer(ByteReader& r) {
  const std::uint32_t rows = get_dim(r, "layer rows");
  const std::uint32_t cols = get_dim(r, "layer cols");
  LinearLayer layer;
  layer.weight = Matrix(rows, cols, r.get_f64s(static_cast<std::size_t>(rows) * cols));
  layer.bias = r.get_f64s(cols);
  return layer;
}

BatchNormState get_bn(ByteReader& r) {
  const std::uint32_t dim = get_dim(r, "batch-norm width");
  BatchNormState bn;
  bn.scale = r.get_f64s(dim);
  bn.shift = r.get_f64s(dim);
  bn.running_mean = r.get_f64s(dim);
  const std::size_t var_at = r.offset();
  bn.running_var = r.get_f64s(dim);
  for (double v : bn.running_var) {
    if (!(v >= 0.0)) throw FormatError(var_at, "negative running variance");
  }
  const std::size_t eps_at = r.offset();
  bn.eps = r.get_f64();
  if (!(bn.eps > 0.0)) throw FormatError(eps_at, "batch-norm eps must be positive");
  bn.momentum = r.get_f64();
  bn.freeze_shift = true;
  return bn;
}

std::vector<std::uint8_t> bank_payload(const CentroidBank& bank) {
  ByteWriter w;
  w.put_u32(static_cast<std::uint32_t>(bank.class_count()));
  w.put_u32(static_cast<std::uint32_t>(bank.dim()));
  w.put_f64(bank.momentum());
  w.put_f64(bank.temperature());
  w.put_u32(bank.convention() == MomentumConvention::old_centroid ? 0u : 1u);
  w.put_f64s(bank.centroids().values());
  return std::move(w).take();
}

CentroidBank get_bank(ByteReader& r, std::size_t block_at) {
  const std::uint32_t c = get_dim(r, "bank class count");
  const std::uint32_t d = get_dim(r, "bank width");
  const double mu = r.get_f64();
  const double tau = r.get_f64();
  const std::size_t conv_at = r.offset();
  const std::uint32_t conv = r.get_u32();
  if (conv > 1) throw FormatError(conv_at, "unknown momentum convention");
  Matrix centroids(c, d, r.get_f64s(static_cast<std::size_t>(c) * d));
  try {
    return CentroidBank(std::move(centroids), mu, tau,
                        conv == 0 ? MomentumConvention::old_centroid
                                  : MomentumConvention::new_feature);
  } catch (const Error& e) {
    throw FormatError(block_at, std::string("invalid BANK block: ") + e.what());
  }
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.put_tag("PCLC");
  w.put_u32(kCheckpointVersion);
  w.put_u32(kLayerCount);
  put_layer(w, ckpt.head.layer1());
  put_layer(w, ckpt.head.layer2());
  put_bn(w, ckpt.head.bnneck1());
  put_bn(w, ckpt.head.bnneck2());
  w.put_u64(ckpt.epoch);
  for (std::uint64_t word : ckpt.rng) w.put_u64(word);

  if (ckpt.bank) {
    const auto payload = bank_payload(*ckpt.bank);
    w.put_tag("BANK");
    w.put_u64(payload.size());
    w.put_bytes(payload);
  }
  if (ckpt.classifier) {
    ByteWriter p;
    p.put_u32(static_cast<std::uint32_t>(ckpt.classifier->rows()));
    p.put_u32(static_cast<std::uint32_t>(ckpt.classifier->cols()));
    p.put_f64s(ckpt.classifier->values());
    w.put_tag("IDCL");
    w.put_u64(p.size());
    w.put_bytes(p.bytes());
  }
  return std::move(w).take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.get_tag() != "PCLC") throw FormatError(0, "bad magic: not a PCLC checkpoint");
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.get_u32();
  if (version != kCheckpointVersion) {
    throw FormatError(version_at, "unsupported checkpoint version " + std::to_string(version));
  }
  const std::size_t count_at = r.offset();
  const std::uint32_t layers = r.get_u32();
  if (layers != kLayerCount) {
    throw FormatError(count_at, "expected " + std::to_string(kLayerCount) + " layers, found " +
                                    std::to_string(layers));
  }
  LinearLayer l1 = get_layer(r);
  const std::size_t l2_at = r.offset();
  LinearLayer l2 = get_layer(r);
  if (l2.fan_in() != l1.fan_out()) throw FormatError(l2_at, "layer shapes do not chain");
  const std::size_t bn1_at = r.offset();
  BatchNormState bn1 = get_bn(r);
  if (bn1.dim() != l1.fan_out()) throw FormatError(bn1_at, "bnneck1 width mismatch");
  const std::size_t bn2_at = r.offset();
  BatchNormState bn2 = get_bn(r);
  if (bn2.dim() != l2.fan_out()) throw FormatError(bn2_at, "bnneck2 width mismatch");

  Checkpoint ckpt;
  ckpt.head = EncoderHead(std::move(l1), std::move(l2), std::move(bn1), std::move(bn2));
  ckpt.epoch = r.get_u64();
  for (auto& word : ckpt.rng) word = r.get_u64();

  while (!r.at_end()) {
    const std::size_t block_at = r.offset();
    const std::string tag = r.get_tag();
    const std::uint64_t length = r.get_u64();
    r.require(length, "block " + tag);
    const std::size_t body_at = r.offset();
    if (tag == "BANK" && !ckpt.bank) {
      ckpt.bank = get_bank(r, block_at);
    } else if (tag == "IDCL" && !ckpt.classifier) {
      const std::uint32_t rows = get_dim(r, "classifier rows");
      const std::uint32_t cols = get_dim(r, "classifier cols");
      ckpt.classifier = Matrix(rows, cols, r.get_f64s(static_cast<std::size_t>(rows) * cols));
    } else {
      throw FormatError(block_at, "unknown or duplicate block tag '" + tag + "'");
    }
    if (r.offset() - body_at != length) {
      throw FormatError(block_at, "block " + tag + " length field disagrees with its contents");
    }
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace pclreid
