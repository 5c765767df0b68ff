#include <doctest.h>

#include <random>

#include "check_error.hpp"
#include "ktcareer/error.hpp"
#include "ktcareer/features.hpp"
#include "oracles.hpp"

using namespace ktc;

TEST_CASE("last state equals the final row of the forward pass") {
  std::mt19937_64 rng(2);
  const auto p = DktParams::random(4, 3, 0.4, 5);
  const auto seq = oracle::random_sequence(rng, 9, 4);
  const auto y = forward(p, seq);
  const auto last = extract_last_state(p, seq);
  CHECK((last.transpose() - y.row(8)).cwiseAbs().maxCoeff() == 0.0);
  CHECK_ERROR(kValidation, extract_last_state(p, EncodedSequence{}));
}

TEST_CASE("feature vectors: profile first, then knowledge state") {
  StudentProfile prof;
  prof.student_id = "s";
  prof.num_actions = 40;
  prof.ave_know = 0.3;
  const std::vector<std::string> names{"k0", "k1"};
  const std::vector<double> state{0.7, 0.2};
  const auto sp = build_features(prof, {}, FeatureMode::kProfile, names);
  CHECK(sp.values.size() == 10);
  CHECK(sp.schema.front() == "num_actions");
  const auto kt = build_features(prof, state, FeatureMode::kKnowledge, names);
  CHECK(kt.values == state);
  CHECK(kt.schema == names);
  const auto both = build_features(prof, state, FeatureMode::kCombined, names);
  REQUIRE(both.values.size() == 12);
  CHECK(both.values[0] == 40);
  CHECK(both.values[10] == 0.7);
  CHECK(both.schema[11] == "k1");
  CHECK(std::string(to_string(FeatureMode::kCombined)) == "KT&SP");

  const std::vector<double> nan_state{0.1, std::nan("")};
  CHECK_ERROR_MSG(kValidation, "k1", build_features(prof, nan_state, FeatureMode::kKnowledge, names));
  CHECK_ERROR(kValidation, build_features(prof, std::vector<double>{0.1}, FeatureMode::kKnowledge, names));
}

TEST_CASE("feature matrix file round trip and column selection") {
  FeatureMatrix m;
  m.schema = {"a", "b", "c"};
  m.student_ids = {"x", "y"};
  m.values.resize(2, 3);
  m.values << 0.1, 1.0 / 3.0, 5e-300, -2.5, 1e10, 0.0;
  m.labels = {1, 0};
  const auto path = std::filesystem::temp_directory_path() / "ktc_features_test.csv";
  write_feature_matrix(path, m);
  const auto back = read_feature_matrix(path);
  CHECK(back.schema == m.schema);
  CHECK(back.student_ids == m.student_ids);
  CHECK(back.labels == m.labels);
  CHECK((back.values.array() == m.values.array()).all());
  const std::vector<std::size_t> cols{2, 0};
  const auto sub = m.select_columns(cols);
  CHECK(sub.schema == std::vector<std::string>{"c", "a"});
  CHECK(sub.values(1, 0) == 0.0);
  CHECK(sub.values(1, 1) == -2.5);
  std::filesystem::remove(path);
}

TEST_CASE("standardizer uses training statistics only and passes constant columns") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> normal(3.0, 2.0);
  Eigen::MatrixXd train(50, 3), apply(10, 3);
  for (int i = 0; i < 50; ++i) train.row(i) << normal(rng), 7.0, normal(rng) * 100;
  for (int i = 0; i < 10; ++i) apply.row(i) << normal(rng), 7.0, normal(rng);
  const auto s = standardize(train, apply);
  for (int j : {0, 2}) {
    CHECK(std::fabs(s.train.col(j).mean()) < 1e-12);
    const double var = s.train.col(j).array().square().mean();
    CHECK(var == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(s.standardizer.constant_columns()[1]);
  CHECK((s.train.col(1).array() == 7.0).all());
  const double mean0 = train.col(0).mean();
  const double sd0 = std::sqrt((train.col(0).array() - mean0).square().mean());
  CHECK(s.apply(3, 0) == doctest::Approx((apply(3, 0) - mean0) / sd0).epsilon(1e-14));
  const auto restored = Standardizer::restore(s.standardizer.mean(), s.standardizer.scale());
  CHECK((restored.transform(apply).array() == s.apply.array()).all());
  CHECK(restored.constant_columns() == s.standardizer.constant_columns());
}
