#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "pclreid/bank.hpp"
#include "pclreid/errors.hpp"

using namespace pclreid;

TEST_CASE("init_bank examples") {
  Rng rng(1);
  SUBCASE("one sample per class gives that sample") {
    const Matrix f = oracle::random_unit_rows(rng, 3, 5);
    const std::vector<int> y{2, 0, 1};
    const auto bank = init_bank(f, y, 3, 0.2, 0.05);
    CHECK(oracle::max_abs_diff(bank.centroid(2), f.row(0)) <= 1e-15);
    CHECK(oracle::max_abs_diff(bank.centroid(0), f.row(1)) <= 1e-15);
  }
  SUBCASE("antipodal pair is degenerate") {
    Matrix f(2, 2, std::vector<double>{1, 0, -1, 0});
    CHECK_THROWS_AS(init_bank(f, std::vector<int>{0, 0}, 1, 0.2, 0.05), DegenerateInputError);
  }
  SUBCASE("empty classes are listed") {
    const Matrix f = oracle::random_unit_rows(rng, 2, 3);
    try {
      init_bank(f, std::vector<int>{0, 0}, 3, 0.2, 0.05);
      FAIL("no throw");
    } catch (const DataError& e) {
      const std::string what = e.what();
      CHECK(what.find('1') != std::string::npos);
      CHECK(what.find('2') != std::string::npos);
    }
  }
  SUBCASE("random case matches mean-then-normalize oracle") {
    for (int t = 0; t < 20; ++t) {
      const Matrix f = oracle::random_unit_rows(rng, 15, 6);
      std::vector<int> y;
      for (int i = 0; i < 15; ++i) y.push_back(i % 5);
      const auto bank = init_bank(f, y, 5, 0.2, 0.05);
      const Matrix expected = oracle::class_means(f, y, 5);
      CHECK(oracle::max_abs_diff(bank.centroids().values(), expected.values()) <= 1e-12);
    }
  }
  SUBCASE("label out of range and bad hyperparameters") {
    const Matrix f = oracle::random_unit_rows(rng, 2, 3);
    CHECK_THROWS_AS(init_bank(f, std::vector<int>{0, 3}, 3, 0.2, 0.05), UsageError);
    CHECK_THROWS_AS(init_bank(f, std::vector<int>{0, 1}, 2, 1.5, 0.05), ConfigError);
    CHECK_THROWS_AS(init_bank(f, std::vector<int>{0, 1}, 2, 0.2, 0.0), ConfigError);
  }
}

TEST_CASE("momentum update examples") {
  const Matrix k(2, 2, std::vector<double>{1, 0, 0, 1});
  const std::vector<double> f{0, 1};
  SUBCASE("mu = 1 is a no-op") {
    CentroidBank bank(k, 1.0, 0.05);
    bank.update(0, f);
    CHECK(bank.centroids() == k);
  }
  SUBCASE("mu = 0 replaces") {
    CentroidBank bank(k, 0.0, 0.05);
    bank.update(0, f);
    CHECK(bank.centroid(0)[0] == 0.0);
    CHECK(bank.centroid(0)[1] == 1.0);
  }
  SUBCASE("mu = 0.5 bisects") {
    CentroidBank bank(k, 0.5, 0.05);
    bank.update(0, f);
    CHECK(bank.centroid(0)[0] == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-15));
    CHECK(bank.centroid(0)[1] == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-15));
    CHECK(bank.centroid(1)[1] == 1.0);
  }
  SUBCASE("conventions mirror each other") {
    const Matrix c(1, 2, std::vector<double>{1, 0});
    CentroidBank old_side(c, 0.2, 0.05, MomentumConvention::old_centroid);
    CentroidBank new_side(c, 0.8, 0.05, MomentumConvention::new_feature);
    old_side.update(0, f);
    new_side.update(0, f);
    CHECK(oracle::max_abs_diff(old_side.centroid(0), new_side.centroid(0)) <= 1e-15);
    const double n = std::hypot(0.2, 0.8);
    CHECK(old_side.centroid(0)[0] == doctest::Approx(0.2 / n).epsilon(1e-15));
  }
  SUBCASE("out-of-range label") {
    CentroidBank bank(k, 0.2, 0.05);
    CHECK_THROWS_AS(bank.update(2, f), UsageError);
    CHECK_THROWS_AS(bank.update(0, std::vector<double>{1, 0, 0}), ShapeError);
  }
  SUBCASE("non-unit centroids are rejected") {
    CHECK_THROWS_AS(CentroidBank(Matrix(1, 2, std::vector<double>{1, 1}), 0.2, 0.05), UsageError);
  }
}

TEST_CASE("update is local and keeps unit norm") {
  Rng rng(2);
  CentroidBank bank(oracle::random_unit_rows(rng, 6, 5), 0.3, 0.05);
  for (int t = 0; t < 1000; ++t) {
    const auto before = bank.centroids();
    const std::size_t y = rng.uniform_index(6);
    const Matrix f = oracle::random_unit_rows(rng, 1, 5);
    bank.update(y, f.row(0));
    for (std::size_t j = 0; j < 6; ++j) {
      if (j == y) continue;
      for (std::size_t k = 0; k < 5; ++k) REQUIRE(bank.centroids()(j, k) == before(j, k));
    }
    REQUIRE(std::abs(std::sqrt(squared_norm(bank.centroid(y))) - 1.0) <= 1e-10);
  }
}

TEST_CASE("repeated updates converge to the feature") {
  Rng rng(3);
  CentroidBank bank(oracle::random_unit_rows(rng, 1, 4), 0.8, 0.05);
  const Matrix f = oracle::random_unit_rows(rng, 1, 4);
  for (int t = 0; t < 200; ++t) bank.update(0, f.row(0));
  double d = 0;
  for (std::size_t k = 0; k < 4; ++k) d += (bank.centroid(0)[k] - f(0, k)) * (bank.centroid(0)[k] - f(0, k));
  CHECK(std::sqrt(d) <= 1e-6);
}

TEST_CASE("batch updates") {
  Rng rng(4);
  const Matrix k = oracle::random_unit_rows(rng, 3, 4);
  const Matrix f = oracle::random_unit_rows(rng, 5, 4);
  const std::vector<int> y{1, 0, 1, 2, 1};
  SUBCASE("per-sample batch update equals sequential updates in row order") {
    CentroidBank a(k, 0.2, 0.05), b(k, 0.2, 0.05);
    a.update_batch(y, f);
    for (std::size_t i = 0; i < 5; ++i) b.update(static_cast<std::size_t>(y[i]), f.row(i));
    CHECK(a == b);
  }
  SUBCASE("batch-mean update uses the normalized class mean once") {
    CentroidBank a(k, 0.2, 0.05), b(k, 0.2, 0.05);
    a.update_batch_mean(y, f);
    const Matrix means = oracle::class_means(f, y, 3);
    for (std::size_t c = 0; c < 3; ++c) b.update(c, means.row(c));
    CHECK(oracle::max_abs_diff(a.centroids().values(), b.centroids().values()) <= 1e-15);
  }
}

TEST_CASE("similarities") {
  Rng rng(5);
  const Matrix k = oracle::random_unit_rows(rng, 4, 6);
  CentroidBank bank(k, 0.2, 0.05);
  const auto self = bank.similarities(k.row(2));
  CHECK(self[2] == doctest::Approx(1.0).epsilon(1e-15));

  const Matrix axes(2, 3, std::vector<double>{1, 0, 0, 0, 1, 0});
  CentroidBank axis_bank(axes, 0.2, 0.05);
  for (double s : axis_bank.similarities(std::vector<double>{0, 0, 1})) CHECK(s == 0.0);

  const Matrix f = oracle::random_unit_rows(rng, 7, 6);
  const Matrix s = bank.similarities(f);
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(s(i, j) - static_cast<double>(oracle::cosine_ld(k.row(j), f.row(i)))) <= 1e-14);
  }
}

TEST_CASE("argmax of similarities ignores temperature") {
  Rng rng(6);
  const Matrix k = oracle::random_unit_rows(rng, 5, 4);
  for (int t = 0; t < 50; ++t) {
    const Matrix f = oracle::random_unit_rows(rng, 1, 4);
    const auto a = CentroidBank(k, 0.2, 0.01).similarities(f.row(0));
    const auto b = CentroidBank(k, 0.2, 3.0).similarities(f.row(0));
    CHECK(a == b);
  }
}
