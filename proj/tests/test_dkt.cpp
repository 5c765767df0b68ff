#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "check_error.hpp"
#include "ktcareer/cohort.hpp"
#include "ktcareer/dkt.hpp"
#include "ktcareer/error.hpp"
#include "oracles.hpp"

using namespace ktc;

namespace {

std::vector<EncodedSequence> random_batch(std::mt19937_64& rng, std::size_t count, std::size_t m,
                                          std::size_t min_len, std::size_t max_len) {
  std::vector<EncodedSequence> batch;
  for (std::size_t i = 0; i < count; ++i) {
    batch.push_back(oracle::random_sequence(rng, min_len + rng() % (max_len - min_len + 1), m));
  }
  return batch;
}

std::vector<Eigen::MatrixXd> states_of(const DktParams& p, const std::vector<EncodedSequence>& batch) {
  std::vector<Eigen::MatrixXd> out;
  for (const auto& s : batch) out.push_back(forward(p, s));
  return out;
}

}  // namespace

TEST_CASE("parameter layout and initialization") {
  const auto p = DktParams::random(3, 4, 0.05, 1);
  CHECK(p.size() == DktParams::parameter_count(3, 4));
  CHECK(p.size() == 16 * 10 + 16 + 3 * 4 + 3);
  CHECK(p.gate_weights().rows() == 16);
  CHECK(p.gate_weights().cols() == 10);
  for (int k = 0; k < 4; ++k) {
    CHECK(p.gate_bias()(k) == 0.0);
    CHECK(p.gate_bias()(4 + k) == 1.0);
  }
  CHECK(p.output_bias().isZero());
  CHECK_ERROR(kValidation, DktParams(0, 4));
}

TEST_CASE("forward pass matches a scalar-loop LSTM") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng() % 6, h = 1 + rng() % 7;
    const auto p = DktParams::random(m, h, 0.5, rng());
    const auto seq = oracle::random_sequence(rng, 1 + rng() % 12, m);
    const auto y = forward(p, seq);
    const auto ref = oracle::lstm_forward(p, seq);
    CHECK((y - ref).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(y.minCoeff() > 0.0);
    CHECK(y.maxCoeff() < 1.0);
  }
}

TEST_CASE("forward rejects out-of-range skills") {
  const auto p = DktParams::random(3, 2, 0.1, 1);
  EncodedSequence s{{0, 3}, {1, 0}};
  CHECK_ERROR_MSG(kValidation, "shape error", forward(p, s));
}

TEST_CASE("loss terms match double-loop oracles") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 2 + rng() % 5;
    const auto batch = random_batch(rng, 1 + rng() % 5, m, 1, 15);
    std::vector<Eigen::MatrixXd> ys;
    std::uniform_real_distribution<double> u(0.01, 0.99);
    std::size_t valid = 0;
    for (const auto& s : batch) {
      Eigen::MatrixXd y(static_cast<Eigen::Index>(s.size()), static_cast<Eigen::Index>(m));
      for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = u(rng);
      ys.push_back(y);
      valid += s.size() - 1;
    }
    if (valid == 0) {
      CHECK_ERROR_MSG(kValidation, "undefined loss", compute_loss_terms(ys, batch));
      continue;
    }
    const auto t = compute_loss_terms(ys, batch);
    const auto o = oracle::losses(ys, batch);
    CHECK(std::fabs(t.prediction - o.l) < 1e-12);
    CHECK(std::fabs(t.reconstruction - o.r) < 1e-12);
    CHECK(std::fabs(t.waviness_l1 - o.w1) < 1e-12);
    CHECK(std::fabs(t.waviness_l2_sq - o.w2) < 1e-12);
    CHECK(t.valid_terms == valid);
  }
}

TEST_CASE("batch loss is the valid-term weighted mean of per-sequence losses") {
  std::mt19937_64 rng(31);
  const auto p = DktParams::random(4, 5, 0.3, 2);
  const auto batch = random_batch(rng, 3, 4, 2, 12);
  const auto ys = states_of(p, batch);
  const auto all = compute_loss_terms(ys, batch);
  double weighted = 0.0, weights = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto one = compute_loss_terms(std::span(&ys[i], 1), std::span(&batch[i], 1));
    weighted += one.prediction * static_cast<double>(batch[i].size() - 1);
    weights += static_cast<double>(batch[i].size() - 1);
  }
  CHECK(all.prediction == doctest::Approx(weighted / weights).epsilon(1e-13));
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(41);
  for (const auto& w : {RegularizerWeights::dkt(), RegularizerWeights::dkt_plus(), RegularizerWeights{0.5, 1.0, 10.0}}) {
    const auto p = DktParams::random(3, 4, 0.3, rng());
    const auto batch = random_batch(rng, 3, 3, 1, 6);
    const auto lg = loss_and_gradient(p, batch, w);
    const auto num = oracle::numeric_gradient(p, batch, w, 1e-5);
    CHECK(oracle::max_relative_error(lg.gradient, num) < 1e-4);
    const auto ys = states_of(p, batch);
    CHECK(lg.objective == doctest::Approx(loss_total(ys, batch, w)).epsilon(1e-13));
    CHECK(gradient_check(p, batch, w) < 1e-4);
  }
}

TEST_CASE("gradient with dropout matches differences under the same masks") {
  std::mt19937_64 rng(43);
  auto p = DktParams::random(3, 5, 0.3, 4);
  const auto batch = random_batch(rng, 2, 3, 3, 6);
  const DropoutSpec drop{0.5, 99};
  const auto w = RegularizerWeights::dkt_plus();
  const auto lg = loss_and_gradient(p, batch, w, drop);
  const auto objective = [&] {
    std::vector<Eigen::MatrixXd> ys;
    for (std::size_t k = 0; k < batch.size(); ++k) ys.push_back(forward(p, batch[k], DropoutSpec{drop.rate, drop.seed + k}));
    return loss_total(ys, batch, w);
  };
  CHECK(lg.objective == doctest::Approx(objective()).epsilon(1e-13));
  Eigen::VectorXd num(p.values().size());
  for (Eigen::Index k = 0; k < num.size(); ++k) {
    const double orig = p.values()(k);
    p.values()(k) = orig + 1e-5;
    const double fp = objective();
    p.values()(k) = orig - 1e-5;
    const double fm = objective();
    p.values()(k) = orig;
    num(k) = (fp - fm) / 2e-5;
  }
  CHECK(oracle::max_relative_error(lg.gradient, num) < 1e-4);
}

TEST_CASE("segments split long sequences") {
  std::mt19937_64 rng(3);
  std::vector<EncodedSequence> seqs = {oracle::random_sequence(rng, 450, 4), oracle::random_sequence(rng, 30, 4)};
  const auto seg = split_segments(seqs, 200);
  REQUIRE(seg.size() == 4);
  CHECK(seg[0].size() == 200);
  CHECK(seg[1].size() == 200);
  CHECK(seg[2].size() == 50);
  CHECK(seg[3].size() == 30);
  CHECK(seg[1].skills[0] == seqs[0].skills[200]);
}

TEST_CASE("checkpoint round trip is exact") {
  const auto p = DktParams::random(5, 6, 0.2, 8);
  TrainConfig c;
  c.hidden = 6;
  c.learning_rate = 0.003;
  c.lambdas = {0.2, 0.4, 1.5};
  const auto path = std::filesystem::temp_directory_path() / "ktc_ckpt_test.ckpt";
  save_checkpoint(path, p, c);
  TrainConfig back_config;
  const auto back = load_checkpoint(path, &back_config);
  CHECK(back.num_skills() == 5);
  CHECK(back.hidden() == 6);
  CHECK((back.values().array() == p.values().array()).all());
  CHECK(back_config.learning_rate == 0.003);
  CHECK(back_config.lambdas.lambda_w2 == 1.5);
  {
    std::ofstream f(path);
    f << "not a checkpoint\n";
  }
  CHECK_ERROR(kValidation, load_checkpoint(path));
  std::filesystem::remove(path);
}

TEST_CASE("training is deterministic, clips gradients and improves the loss") {
  CohortConfig cc;
  cc.n_students = 60;
  cc.num_skills = 4;
  cc.min_length = 20;
  cc.max_length = 40;
  cc.seed = 9;
  const auto cohort = generate_cohort(cc);
  std::vector<EncodedSequence> seqs;
  for (const auto& s : cohort.sequences) seqs.push_back(encode_sequence(s));
  TrainConfig c;
  c.hidden = 8;
  c.max_epochs = 6;
  c.batch_size = 16;
  c.clip_norm = 0.05;
  c.seed = 1;
  const auto a = train(seqs, 4, c);
  const auto b = train(seqs, 4, c);
  std::ostringstream la, lb;
  write_training_log(la, a.log);
  write_training_log(lb, b.log);
  CHECK(la.str() == lb.str());
  CHECK((a.params.values().array() == b.params.values().array()).all());
  for (std::size_t e = 1; e < a.log.size(); ++e) CHECK(a.log[e].max_clipped_norm <= 0.05 * (1 + 1e-12));
  CHECK(a.log.back().train.prediction < a.log.front().train.prediction);
  CHECK(a.best_epoch < a.log.size());
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.dropout_rate = 1.0;
  CHECK_ERROR(kValidation, c.validate());
  c = {};
  c.lambdas.lambda_r = -1;
  CHECK_ERROR(kValidation, c.validate());
  c = {};
  c.segment_length = 1;
  CHECK_ERROR(kValidation, c.validate());
}
