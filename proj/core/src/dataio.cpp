#include "pclreid/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pclreid/binary_io.hpp"
#include "pclreid/errors.hpp"
#include "pclreid/numerics.hpp"
#include "pclreid/rng.hpp"

namespace pclreid {

namespace {

constexpr std::uint64_t kMeanStream = 1;
constexpr std::uint64_t kCameraStream = std::uint64_t{1} << 32;
constexpr std::uint64_t kClassStream = std::uint64_t{1} << 33;

struct SplitCounts {
  std::size_t train, query, gallery;
};

SplitCounts split_counts(const SyntheticSpec& s) {
  const auto n = static_cast<double>(s.samples_per_class);
  const auto train = static_cast<std::size_t>(std::llround(n * s.train_fraction));
  const auto query = static_cast<std::size_t>(std::llround(n * s.query_fraction));
  if (train + query >= s.samples_per_class) {
    throw ConfigError("split", "infeasible split: no gallery samples left per class");
  }
  const SplitCounts c{train, query, s.samples_per_class - train - query};
  if (c.train == 0 || c.query == 0) {
    throw ConfigError("split", "infeasible split: every class needs train and query samples");
  }
  if (s.cameras >= 2 && c.gallery < 2) {
    throw ConfigError("split", "infeasible split: need >= 2 gallery samples per class for "
                               "cross-camera matches");
  }
  return c;
}

void validate(const SyntheticSpec& s) {
  if (s.classes < 2) throw ConfigError("classes", "must be >= 2");
  if (s.dim < 2) throw ConfigError("dim", "must be >= 2");
  if (s.cameras < 1) throw ConfigError("cameras", "must be >= 1");
  if (!(s.sigma >= 0.0)) throw ConfigError("sigma", "must be >= 0");
  if (!(s.sigma_cam >= 0.0)) throw ConfigError("sigma-cam", "must be >= 0");
  if (!(s.train_fraction >= 0.0 && s.query_fraction >= 0.0 &&
        s.train_fraction + s.query_fraction <= 1.0)) {
    throw ConfigError("split", "fractions must be >= 0 and sum to at most 1");
  }
  split_counts(s);
}

std::vector<double> normal_vector(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (double& x : v) x = rng.normal();
  return v;
}

}  // namespace

std::size_t LabeledDataset::class_count() const {
  if (labels.empty()) return 0;
  return static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
}

LabeledDataset select_rows(const LabeledDataset& data, std::span<const std::size_t> indices) {
  LabeledDataset out;
  out.features = gather_rows(data.features, indices);
  for (std::size_t i : indices) {
    if (data.has_labels()) out.labels.push_back(data.labels[i]);
    if (data.has_cameras()) out.cameras.push_back(data.cameras[i]);
    out.splits.push_back(data.splits.empty() ? Split::train : data.splits[i]);
  }
  return out;
}

LabeledDataset select_split(const LabeledDataset& data, Split split) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data.splits.empty() && data.splits[i] == split) idx.push_back(i);
  }
  return select_rows(data, idx);
}

SyntheticSpec SyntheticSpec::standard(std::uint64_t seed) {
  SyntheticSpec s;
  s.seed = seed;
  return s;
}

SyntheticSpec SyntheticSpec::hard(std::uint64_t seed) {
  SyntheticSpec s = standard(seed);
  s.sigma = 0.3;
  return s;
}

LabeledDataset gen_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  const SplitCounts counts = split_counts(spec);

  Rng mean_rng = Rng::derive(spec.seed, kMeanStream);
  Matrix means(spec.classes, spec.dim);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    const auto unit = l2_normalize(normal_vector(mean_rng, spec.dim));
    std::copy(unit.begin(), unit.end(), means.row(c).begin());
  }
  Rng cam_rng = Rng::derive(spec.seed, kCameraStream + spec.camera_variant);
  Matrix biases(spec.cameras, spec.dim);
  for (std::size_t k = 0; k < spec.cameras; ++k) {
    const auto b = l2_normalize(normal_vector(cam_rng, spec.dim));
    std::copy(b.begin(), b.end(), biases.row(k).begin());
  }

  const std::size_t n = spec.classes * spec.samples_per_class;
  LabeledDataset out;
  out.features = Matrix(n, spec.dim);
  out.labels.resize(n);
  out.cameras.resize(n);
  out.splits.resize(n);
  std::vector<double> x(spec.dim);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    Rng rng = Rng::derive(spec.seed, kClassStream + c);
    for (std::size_t t = 0; t < spec.samples_per_class; ++t) {
      const std::size_t row = c * spec.samples_per_class + t;
      Split split = Split::train;
      std::size_t pos = t;
      std::size_t offset = 0;
      if (t >= counts.train + counts.query) {
        split = Split::gallery;
        pos = t - counts.train - counts.query;
        offset = 1;
      } else if (t >= counts.train) {
        split = Split::query;
        pos = t - counts.train;
      }
      const std::size_t cam = (c + pos + offset) % spec.cameras;
      for (std::size_t k = 0; k < spec.dim; ++k) {
        x[k] = means(c, k) + spec.sigma * rng.normal() + spec.sigma_cam * biases(cam, k);
      }
      const auto unit = l2_normalize(x);
      std::copy(unit.begin(), unit.end(), out.features.row(row).begin());
      out.labels[row] = static_cast<int>(c);
      out.cameras[row] = static_cast<int>(cam);
      out.splits[row] = split;
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_features(const LabeledDataset& data, StoragePrecision precision) {
  if (data.has_labels() && data.labels.size() != data.size()) {
    throw ShapeError("encode_features: label count mismatch");
  }
  if (data.has_cameras() && data.cameras.size() != data.size()) {
    throw ShapeError("encode_features: camera count mismatch");
  }
  std::uint32_t flags = 0;
  if (data.has_labels()) flags |= kHasLabels;
  if (data.has_cameras()) flags |= kHasCameras;
  if (precision == StoragePrecision::f32) flags |= kFloat32;

  ByteWriter w;
  w.put_tag("PCLF");
  w.put_u32(kFeatureFileVersion);
  w.put_u32(static_cast<std::uint32_t>(data.size()));
  w.put_u32(static_cast<std::uint32_t>(data.dim()));
  w.put_u32(flags);
  for (double v : data.features.values()) {
    if (precision == StoragePrecision::f32) w.put_f32(static_cast<float>(v));
    else w.put_f64(v);
  }
  for (int v : data.labels) w.put_i32(v);
  for (int v : data.cameras) w.put_i32(v);
  return std::move(w).take();
}

LabeledDataset decode_features(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const std::string magic = r.get_tag();
  if (magic != "PCLF") throw FormatError(0, "bad magic: not a PCLF feature file");
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.get_u32();
  if (version != kFeatureFileVersion) {
    throw FormatError(version_at, "unsupported feature file version " + std::to_string(version));
  }
  const std::uint32_t count = r.get_u32();
  const std::uint32_t dim = r.get_u32();
  const std::size_t flags_at = r.offset();
  const std::uint32_t flags = r.get_u32();
  if (flags & ~(kHasLabels | kHasCameras | kFloat32)) {
    throw FormatError(flags_at, "unknown flag bits set");
  }
  const bool f32 = flags & kFloat32;
  const std::size_t values = static_cast<std::size_t>(count) * dim;
  const std::size_t payload = values * (f32 ? 4 : 8) +
                              ((flags & kHasLabels) ? 4u * count : 0u) +
                              ((flags & kHasCameras) ? 4u * count : 0u);
  r.require(payload, "feature payload declared by header");
  if (r.remaining() != payload) {
    throw FormatError(r.offset() + payload, "trailing bytes after declared payload");
  }

  LabeledDataset out;
  std::vector<double> data(values);
  for (std::size_t i = 0; i < values; ++i) {
    const std::size_t at = r.offset();
    data[i] = f32 ? static_cast<double>(r.get_f32()) : r.get_f64();
    if (!std::isfinite(data[i])) throw FormatError(at, "non-finite feature value");
  }
  out.features = Matrix(count, dim, std::move(data));
  if (flags & kHasLabels) {
    out.labels.resize(count);
    for (int& v : out.labels) {
      const std::size_t at = r.offset();
      v = r.get_i32();
      if (v < 0) throw FormatError(at, "negative identity label");
    }
  }
  if (flags & kHasCameras) {
    out.cameras.resize(count);
    for (int& v : out.cameras) v = r.get_i32();
  }
  out.splits.assign(count, Split::train);
  return out;
}

void write_features(const std::filesystem::path& path, const LabeledDataset& data,
                    StoragePrecision precision) {
  write_file_bytes(path, encode_features(data, precision));
}

LabeledDataset read_features(const std::filesystem::path& path) {
  return decode_features(read_file_bytes(path));
}

}  // namespace pclreid
