#include <doctest.h>

#include <random>
#include <sstream>

#include "check_error.hpp"
#include "ktcareer/error.hpp"
#include "ktcareer/eval.hpp"

using namespace ktc;

namespace {

struct Dataset {
  Eigen::MatrixXd x;
  std::vector<int> y;
};

Dataset planted(std::size_t n, std::size_t d, std::size_t informative, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Dataset ds;
  ds.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    const int label = i % 4 == 0;
    ds.y.push_back(label);
    for (std::size_t j = 0; j < d; ++j)
      ds.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = normal(rng) + (j < informative && label ? 1.0 : 0.0);
  }
  return ds;
}

}  // namespace

TEST_CASE("stratified folds at the 117:350 class ratio") {
  std::vector<int> y(467, 0);
  for (int i = 0; i < 117; ++i) y[static_cast<std::size_t>(i * 4)] = 1;
  const auto folds = stratified_kfold(y, 5, 7);
  std::vector<int> size(5), pos(5);
  for (std::size_t i = 0; i < y.size(); ++i) {
    REQUIRE(folds[i] < 5);
    ++size[folds[i]];
    pos[folds[i]] += y[i];
  }
  for (int f = 0; f < 5; ++f) {
    CHECK(size[static_cast<std::size_t>(f)] >= 93);
    CHECK(size[static_cast<std::size_t>(f)] <= 94);
    CHECK(pos[static_cast<std::size_t>(f)] >= 23);
    CHECK(pos[static_cast<std::size_t>(f)] <= 24);
  }
  CHECK(stratified_kfold(y, 5, 7) == folds);
  CHECK(stratified_kfold(y, 5, 8) != folds);
}

TEST_CASE("stratified folds property: class counts differ by at most one") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng() % 8;
    const std::size_t n1 = k + rng() % 50, n0 = k + rng() % 80;
    std::vector<int> y(n0, 0);
    y.insert(y.end(), n1, 1);
    std::shuffle(y.begin(), y.end(), rng);
    const auto folds = stratified_kfold(y, k, rng());
    std::vector<std::size_t> c0(k), c1(k);
    for (std::size_t i = 0; i < y.size(); ++i) (y[i] ? c1 : c0)[folds[i]]++;
    std::vector<std::size_t> total(k);
    for (std::size_t f = 0; f < k; ++f) total[f] = c0[f] + c1[f];
    CHECK(*std::max_element(c0.begin(), c0.end()) - *std::min_element(c0.begin(), c0.end()) <= 1);
    CHECK(*std::max_element(c1.begin(), c1.end()) - *std::min_element(c1.begin(), c1.end()) <= 1);
    CHECK(*std::max_element(total.begin(), total.end()) - *std::min_element(total.begin(), total.end()) <= 1);
  }
  CHECK_ERROR(kValidation, stratified_kfold(std::vector<int>{1, 0, 0, 0}, 2, 1));
}

TEST_CASE("summary uses the population standard deviation") {
  const std::vector<double> v{1, 2, 3, 4};
  const auto s = summarize(v);
  CHECK(s.mean == 2.5);
  CHECK(s.std == doctest::Approx(std::sqrt(1.25)));
}

TEST_CASE("cross validation scores each held-out fold with a model fit on the rest") {
  const auto ds = planted(120, 3, 2, 3);
  const auto spec = ClassifierSpec::lr_spec(1.0, Penalty::kL2);
  const auto folds = stratified_kfold(ds.y, 4, 11);
  const auto cv = cross_validate(spec, ds.x, ds.y, folds, 4);
  REQUIRE(cv.test_folds.size() == 4);
  for (std::size_t f = 0; f < 4; ++f) {
    std::vector<Eigen::Index> tr, te;
    for (std::size_t i = 0; i < 120; ++i) (folds[i] == f ? te : tr).push_back(static_cast<Eigen::Index>(i));
    std::vector<int> ytr, yte;
    for (auto i : tr) ytr.push_back(ds.y[static_cast<std::size_t>(i)]);
    for (auto i : te) yte.push_back(ds.y[static_cast<std::size_t>(i)]);
    const auto m = fit(spec, ds.x(tr, Eigen::all), ytr);
    const Eigen::VectorXd p = predict_proba(m, ds.x(te, Eigen::all));
    const auto expected = score_predictions({p.data(), static_cast<std::size_t>(p.size())}, yte);
    CHECK(cv.test_folds[f].auc == expected.auc);
    CHECK(cv.test_folds[f].combined == doctest::Approx(expected.auc + 1.0 - expected.rmse));
  }
  CHECK(cv.train.auc.mean >= cv.test.auc.mean - 0.05);
}

TEST_CASE("grid search keeps grid order and picks the best mean") {
  const auto ds = planted(120, 3, 2, 4);
  const std::vector<ClassifierSpec> grid{ClassifierSpec::lr_spec(1.0, Penalty::kL2),
                                         ClassifierSpec::lr_spec(1.0, Penalty::kL2),
                                         ClassifierSpec::lr_spec(0.001, Penalty::kL1)};
  const auto g = grid_search(grid, ds.x, ds.y, 3, 5);
  REQUIRE(g.results.size() == 3);
  CHECK(g.results[0].test.combined.mean == g.results[1].test.combined.mean);
  CHECK(g.best_index == 0);
  for (const auto& r : g.results) CHECK(r.test.combined.mean <= g.results[g.best_index].test.combined.mean);
}

TEST_CASE("default grids") {
  CHECK(default_grid(Family::kGbdt).size() == 80);
  CHECK(default_grid(Family::kLda).size() == 3);
  CHECK(default_grid(Family::kLr).size() == 12);
  CHECK(default_grid(Family::kSvm).size() == 6);
}

TEST_CASE("nested cross validation records one choice per outer fold") {
  const auto ds = planted(100, 3, 2, 6);
  const auto grid = default_grid(Family::kLda);
  const auto r = nested_cross_validate(grid, ds.x, ds.y, 3, 2);
  CHECK(r.chosen_index.size() == 3);
  CHECK(r.test.auc.mean > 0.6);
}

TEST_CASE("RFE drops noise first and keeps nested subsets") {
  const auto ds = planted(400, 8, 3, 7);
  const auto r = rfe(ClassifierSpec::lr_spec(1.0, Penalty::kL2), ds.x, ds.y, {2, 3, 5, 20}, 4, 1);
  CHECK(r.subsets.count(8));
  CHECK_FALSE(r.subsets.count(20));
  CHECK(r.elimination_order.size() == 6);
  const auto& three = r.subsets.at(3);
  CHECK(three == std::vector<std::size_t>{0, 1, 2});
  for (const auto& [size, cols] : r.subsets) {
    CHECK(cols.size() == size);
    if (size > 3) CHECK(std::includes(cols.begin(), cols.end(), three.begin(), three.end()));
  }
  CHECK(r.cv_combined.count(r.best_size));
  CHECK_ERROR(kUnsupported, rfe(ClassifierSpec::svm_spec(1.0), ds.x, ds.y, {3}, 4, 1));
}

TEST_CASE("evaluation report layout") {
  EvalRow row;
  row.model = "LR";
  row.features = "SP";
  row.spec = "LR(C=1 penalty=L2)";
  row.test.auc = {0.75, 0.01};
  row.nested_combined = Summary{1.2, 0.1};
  std::ostringstream out;
  write_eval_report(out, std::span(&row, 1));
  std::istringstream in(out.str());
  std::string header, train, test;
  std::getline(in, header);
  std::getline(in, train);
  std::getline(in, test);
  CHECK(header.rfind("Model,Features,Split,AP", 0) == 0);
  CHECK(train.rfind("LR,SP,train,", 0) == 0);
  CHECK(test.find("0.750000,0.010000") != std::string::npos);
  CHECK(test.find("1.200000,0.100000") != std::string::npos);
}
