#include <cmath>
#include <cstring>
#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "pclreid/dataio.hpp"
#include "pclreid/errors.hpp"

using namespace pclreid;

namespace {

/// Nearest-class-mean accuracy: means from the train split, scored on query and gallery.
double ncm_accuracy(const LabeledDataset& data) {
  const auto train = select_split(data, Split::train);
  const Matrix means = oracle::class_means(train.features, train.labels, data.class_count());
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.splits[i] == Split::train) continue;
    std::size_t best = 0;
    double best_s = -2;
    for (std::size_t c = 0; c < means.rows(); ++c) {
      const double s = dot(means.row(c), data.features.row(i));
      if (s > best_s) {
        best_s = s;
        best = c;
      }
    }
    hits += static_cast<int>(best) == data.labels[i];
    ++total;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

std::filesystem::path temp(const char* name) { return std::filesystem::temp_directory_path() / name; }

}  // namespace

TEST_CASE("standard and hard presets") {
  const auto s = SyntheticSpec::standard(3);
  CHECK(s.classes == 32);
  CHECK(s.samples_per_class == 40);
  CHECK(s.dim == 64);
  CHECK(s.sigma == 0.15);
  CHECK(s.cameras == 4);
  CHECK(s.sigma_cam == 0.1);
  CHECK(s.train_fraction == 0.5);
  CHECK(s.query_fraction == 0.25);
  CHECK(s.seed == 3);
  CHECK(SyntheticSpec::hard(3).sigma == 0.3);
}

TEST_CASE("generated data shape, norms, splits and cameras") {
  const auto data = gen_synthetic(SyntheticSpec::standard(1));
  CHECK(data.size() == 32 * 40);
  CHECK(data.dim() == 64);
  CHECK(data.class_count() == 32);
  for (std::size_t r = 0; r < data.size(); ++r) CHECK(std::abs(std::sqrt(squared_norm(data.features.row(r))) - 1.0) <= 1e-12);
  std::map<int, std::map<Split, int>> per_split;
  std::map<int, std::set<int>> cams;
  for (std::size_t i = 0; i < data.size(); ++i) {
    ++per_split[data.labels[i]][data.splits[i]];
    cams[data.labels[i]].insert(data.cameras[i]);
    CHECK((data.cameras[i] >= 0 && data.cameras[i] < 4));
  }
  for (auto& [id, m] : per_split) {
    CHECK(m[Split::train] == 20);
    CHECK(m[Split::query] == 10);
    CHECK(m[Split::gallery] == 10);
    CHECK(cams[id].size() >= 2);
  }
  // Every query has a gallery match from another camera.
  const auto q = select_split(data, Split::query), g = select_split(data, Split::gallery);
  for (std::size_t i = 0; i < q.size(); ++i) {
    bool found = false;
    for (std::size_t j = 0; j < g.size() && !found; ++j) found = g.labels[j] == q.labels[i] && g.cameras[j] != q.cameras[i];
    CHECK(found);
  }
}

TEST_CASE("generation is deterministic and seed dependent") {
  CHECK(gen_synthetic(SyntheticSpec::standard(4)) == gen_synthetic(SyntheticSpec::standard(4)));
  CHECK_FALSE(gen_synthetic(SyntheticSpec::standard(4)) == gen_synthetic(SyntheticSpec::standard(5)));
}

TEST_CASE("zero noise puts every sample on its class mean") {
  auto spec = SyntheticSpec::standard(2);
  spec.sigma = 0;
  spec.sigma_cam = 0;
  const auto data = gen_synthetic(spec);
  std::map<int, std::size_t> first;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto [it, inserted] = first.emplace(data.labels[i], i);
    if (!inserted) CHECK(oracle::max_abs_diff(data.features.row(i), data.features.row(it->second)) == 0.0);
  }
  // Means are distinct unit vectors.
  CHECK(oracle::max_abs_diff(data.features.row(first[0]), data.features.row(first[1])) > 0.1);
}

TEST_CASE("camera variant redraws only the camera biases") {
  auto a = SyntheticSpec::standard(6);
  auto b = a;
  b.camera_variant = 1;
  auto c = a;
  c.sigma_cam = 0;
  auto d = b;
  d.sigma_cam = 0;
  const auto da = gen_synthetic(a), db = gen_synthetic(b);
  CHECK(da.labels == db.labels);
  CHECK(da.cameras == db.cameras);
  CHECK_FALSE(da.features == db.features);
  CHECK(gen_synthetic(c).features == gen_synthetic(d).features);
}

TEST_CASE("nearest-class-mean accuracy on the standard set is at least 0.99") {
  for (std::uint64_t seed : {0, 1, 2}) CHECK(ncm_accuracy(gen_synthetic(SyntheticSpec::standard(seed))) >= 0.99);
}

TEST_CASE("invalid generator settings") {
  auto s = SyntheticSpec::standard();
  s.classes = 1;
  CHECK_THROWS_AS(gen_synthetic(s), ConfigError);
  s = SyntheticSpec::standard();
  s.sigma = -1;
  CHECK_THROWS_AS(gen_synthetic(s), ConfigError);
  s = SyntheticSpec::standard();
  s.samples_per_class = 2;
  CHECK_THROWS_AS(gen_synthetic(s), ConfigError);
  s = SyntheticSpec::standard();
  s.train_fraction = 0.9;
  s.query_fraction = 0.2;
  CHECK_THROWS_AS(gen_synthetic(s), ConfigError);
}

TEST_CASE("split and row selection") {
  const auto data = gen_synthetic(SyntheticSpec::standard(1));
  const auto q = select_split(data, Split::query);
  CHECK(q.size() == 320);
  for (auto s : q.splits) CHECK(s == Split::query);
  const std::vector<std::size_t> rows{5, 2};
  const auto r = select_rows(data, rows);
  CHECK(r.labels == std::vector<int>{data.labels[5], data.labels[2]});
}

TEST_CASE("PCLF layout") {
  LabeledDataset d;
  d.features = Matrix(1, 2, std::vector<double>{1.0, -2.0});
  d.labels = {7};
  d.splits = {Split::train};
  const auto b = encode_features(d);
  const std::vector<std::uint8_t> expected{
      'P', 'C', 'L', 'F', 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0,  // header, flags = labels
      0, 0, 0, 0, 0, 0, 0xF0, 0x3F,                                      // 1.0
      0, 0, 0, 0, 0, 0, 0x00, 0xC0,                                      // -2.0
      7, 0, 0, 0};
  CHECK(b == expected);
  const auto f = encode_features(d, StoragePrecision::f32);
  CHECK(f[16] == (kHasLabels | kFloat32));
  CHECK(f.size() == 20 + 8 + 4);
}

TEST_CASE("PCLF round trips") {
  auto data = gen_synthetic(SyntheticSpec::standard(1));
  for (auto& s : data.splits) s = Split::train;
  const auto path = temp("pclreid_roundtrip.pclf");
  write_features(path, data);
  CHECK(read_features(path) == data);

  LabeledDataset bare;
  bare.features = data.features;
  bare.splits = data.splits;
  write_features(path, bare);
  const auto back = read_features(path);
  CHECK_FALSE(back.has_labels());
  CHECK_FALSE(back.has_cameras());
  CHECK(back == bare);
  std::filesystem::remove(path);
}

TEST_CASE("1000x96 f32 round trip preserves every stored bit") {
  Rng rng(8);
  LabeledDataset d;
  d.features = oracle::random_matrix(rng, 1000, 96);
  d.splits.assign(1000, Split::train);
  const auto bytes = encode_features(d, StoragePrecision::f32);
  const auto back = decode_features(bytes);
  REQUIRE(back.features.rows() == 1000);
  for (std::size_t i = 0; i < back.features.size(); ++i) {
    const float stored = static_cast<float>(d.features.values()[i]);
    std::uint32_t want, got;
    const float widened_back = static_cast<float>(back.features.values()[i]);
    std::memcpy(&want, &stored, 4);
    std::memcpy(&got, &widened_back, 4);
    REQUIRE(want == got);
    REQUIRE(back.features.values()[i] == static_cast<double>(stored));
  }
  CHECK(encode_features(back, StoragePrecision::f32) == bytes);
}

TEST_CASE("PCLF corruption is reported with offsets") {
  LabeledDataset d;
  d.features = Matrix(2, 3, 0.5);
  d.labels = {0, 1};
  d.cameras = {1, 2};
  d.splits.assign(2, Split::train);
  const auto good = encode_features(d);

  auto offset_of = [](const std::vector<std::uint8_t>& b) -> std::size_t {
    try {
      decode_features(b);
    } catch (const FormatError& e) {
      return e.offset();
    }
    return SIZE_MAX;
  };
  auto bad = good;
  bad[1] = 'X';
  CHECK(offset_of(bad) == 0);
  bad = good;
  bad[4] = 9;
  CHECK(offset_of(bad) == 4);
  bad = good;
  bad[16] |= 0x80;
  CHECK(offset_of(bad) == 16);
  for (std::size_t n = 0; n < good.size(); ++n) {
    std::vector<std::uint8_t> t(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(n));
    CHECK(offset_of(t) != SIZE_MAX);
  }
  auto extra = good;
  extra.push_back(0);
  CHECK(offset_of(extra) != SIZE_MAX);
  CHECK_THROWS_AS(read_features(temp("pclreid_does_not_exist.pclf")), Error);
}
