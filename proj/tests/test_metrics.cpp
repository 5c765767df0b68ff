#include <doctest.h>

#include <random>

#include "check_error.hpp"
#include "ktcareer/error.hpp"
#include "ktcareer/metrics.hpp"
#include "oracles.hpp"

using namespace ktc;

TEST_CASE("AUC small cases") {
  CHECK(auc(std::vector<double>{0.9, 0.8, 0.3, 0.2}, std::vector<int>{1, 1, 0, 0}) == 1.0);
  CHECK(auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{1, 1, 0, 0}) == 0.0);
  CHECK(auc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, std::vector<int>{1, 0, 1, 0}) == 0.5);
  CHECK(auc(std::vector<double>{0.8, 0.4, 0.6, 0.2}, std::vector<int>{1, 1, 0, 0}) == 0.75);
}

TEST_CASE("AP and RMSE small cases") {
  CHECK(average_precision(std::vector<double>{0.9, 0.8, 0.3, 0.2}, std::vector<int>{1, 1, 0, 0}) == 1.0);
  // ranks: 1 (pos), 2 (neg), 3 (pos) -> (1 + 2/3) / 2
  CHECK(average_precision(std::vector<double>{0.9, 0.5, 0.1}, std::vector<int>{1, 0, 1}) ==
        doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(rmse(std::vector<double>{1.0, 0.0}, std::vector<int>{1, 0}) == 0.0);
  CHECK(rmse(std::vector<double>{0.5, 0.5}, std::vector<int>{1, 0}) == 0.5);
}

TEST_CASE("metric errors") {
  CHECK_ERROR(kValidation, auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}));
  CHECK_ERROR(kValidation, average_precision(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 0}));
  CHECK_ERROR(kValidation, rmse(std::vector<double>{0.1}, std::vector<int>{1, 0}));
}

TEST_CASE("combined score") {
  CHECK(combined_score(0.623, 0.432) == doctest::Approx(1.191).epsilon(1e-12));
  CHECK(combined_score(0.694, 0.414) == doctest::Approx(1.280).epsilon(1e-12));
}

TEST_CASE("metrics agree with brute force on random instances with ties") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng() % 49;
    const int levels = 1 + static_cast<int>(rng() % 12);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % static_cast<std::uint64_t>(levels)) / levels;
      y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 1;
    y[1] = 0;
    CHECK(std::fabs(auc(s, y) - oracle::auc(s, y)) < 1e-12);
    CHECK(std::fabs(average_precision(s, y) - oracle::average_precision(s, y)) < 1e-12);
    CHECK(std::fabs(rmse(s, y) - oracle::rmse(s, y)) < 1e-12);
  }
}

TEST_CASE("AUC is invariant under strictly increasing transforms") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 5 + rng() % 40;
    std::vector<double> s(n), t(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = normal(rng);
      t[i] = std::exp(3.0 * s[i]) + 1.0;
      y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 1;
    y[1] = 0;
    CHECK(auc(s, y) == doctest::Approx(auc(t, y)).epsilon(1e-14));
    std::vector<double> neg(n);
    for (std::size_t i = 0; i < n; ++i) neg[i] = -s[i];
    CHECK(auc(s, y) + auc(neg, y) == doctest::Approx(1.0).epsilon(1e-14));
  }
}
