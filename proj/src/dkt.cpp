#include "ktcareer/dkt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "ktcareer/error.hpp"
#include "ktcareer/metrics.hpp"
#include "text_io.hpp"

namespace ktc {

namespace {

using Eigen::Index;

constexpr double kProbFloor = 1e-15;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double cross_entropy(double y, int target) {
  y = std::clamp(y, kProbFloor, 1.0 - kProbFloor);
  return target ? -std::log(y) : -std::log1p(-y);
}

inline Index idx(std::size_t v) { return static_cast<Index>(v); }

// Activations kept for backpropagation.
struct Trace {
  Eigen::MatrixXd gates;  // 4H x T, post-activation (i, f, g, o)
  Eigen::MatrixXd cell;   // H x (T+1), column 0 is the zero initial state
  Eigen::MatrixXd hidden; // H x (T+1)
  Eigen::MatrixXd mask;   // H x T scaled keep mask; empty without dropout
  Eigen::MatrixXd output; // M x T probabilities
};

void check_sequence(const DktParams& params, const EncodedSequence& seq) {
  if (seq.skills.size() != seq.correct.size()) throw ValidationError("shape error: skills/correct length mismatch");
  for (auto s : seq.skills) {
    if (s >= params.num_skills()) {
      throw ValidationError("shape error: skill id " + std::to_string(s) + " outside model of " +
                            std::to_string(params.num_skills()) + " skills");
    }
  }
}

Trace run_forward(const DktParams& params, const EncodedSequence& seq, const DropoutSpec* dropout) {
  check_sequence(params, seq);
  const auto m = idx(params.num_skills());
  const auto h = idx(params.hidden());
  const auto t_len = idx(seq.size());
  const auto w = params.gate_weights();
  const auto b = params.gate_bias();
  const auto wo = params.output_weights();
  const auto bo = params.output_bias();
  const auto wh = w.rightCols(h);

  Trace tr;
  tr.gates.resize(4 * h, t_len);
  tr.cell = Eigen::MatrixXd::Zero(h, t_len + 1);
  tr.hidden = Eigen::MatrixXd::Zero(h, t_len + 1);
  tr.output.resize(m, t_len);
  std::mt19937_64 rng(dropout ? dropout->seed : 0);
  if (dropout) {
    tr.mask.resize(h, t_len);
    std::bernoulli_distribution keep(1.0 - dropout->rate);
    const double scale = 1.0 / (1.0 - dropout->rate);
    for (Index t = 0; t < t_len; ++t)
      for (Index k = 0; k < h; ++k) tr.mask(k, t) = keep(rng) ? scale : 0.0;
  }

  Eigen::VectorXd z(4 * h);
  Eigen::VectorXd dropped(h);
  for (Index t = 0; t < t_len; ++t) {
    const auto q = idx(seq.skills[static_cast<std::size_t>(t)]);
    z = b + w.col(q);
    if (seq.correct[static_cast<std::size_t>(t)]) z += w.col(m + q);
    z.noalias() += wh * tr.hidden.col(t);
    auto g = tr.gates.col(t);
    for (Index k = 0; k < h; ++k) {
      g(k) = sigmoid(z(k));
      g(h + k) = sigmoid(z(h + k));
      g(2 * h + k) = std::tanh(z(2 * h + k));
      g(3 * h + k) = sigmoid(z(3 * h + k));
    }
    tr.cell.col(t + 1) = g.segment(h, h).cwiseProduct(tr.cell.col(t)) + g.head(h).cwiseProduct(g.segment(2 * h, h));
    tr.hidden.col(t + 1) = g.tail(h).cwiseProduct(tr.cell.col(t + 1).array().tanh().matrix());
    if (dropout) {
      dropped = tr.hidden.col(t + 1).cwiseProduct(tr.mask.col(t));
    } else {
      dropped = tr.hidden.col(t + 1);
    }
    auto y = tr.output.col(t);
    y.noalias() = wo * dropped;
    y += bo;
    for (Index j = 0; j < m; ++j) y(j) = sigmoid(y(j));
  }
  return tr;
}

// Unnormalized sums of the four loss terms over one sequence (Y is T x M).
struct TermSums {
  double prediction = 0.0, reconstruction = 0.0, l1 = 0.0, l2 = 0.0;
  std::size_t terms = 0;
};

TermSums term_sums(const Eigen::MatrixXd& y, const EncodedSequence& seq) {
  TermSums s;
  const auto t_len = seq.size();
  if (static_cast<std::size_t>(y.rows()) != t_len) throw ValidationError("shape error: state rows != sequence length");
  for (std::size_t t = 0; t + 1 < t_len; ++t) {
    const auto row = idx(t);
    if (seq.skills[t + 1] >= static_cast<std::size_t>(y.cols()) || seq.skills[t] >= static_cast<std::size_t>(y.cols())) {
      throw ValidationError("shape error: skill id outside state width");
    }
    s.prediction += cross_entropy(y(row, idx(seq.skills[t + 1])), seq.correct[t + 1]);
    s.reconstruction += cross_entropy(y(row, idx(seq.skills[t])), seq.correct[t]);
    const auto diff = (y.row(row + 1) - y.row(row)).array();
    s.l1 += diff.abs().sum();
    s.l2 += diff.square().sum();
    ++s.terms;
  }
  return s;
}

LossTerms normalize(const TermSums& total, std::size_t num_skills) {
  if (total.terms == 0) throw ValidationError("undefined loss: batch has no sequence of length >= 2");
  LossTerms out;
  const double n = static_cast<double>(total.terms);
  out.prediction = total.prediction / n;
  out.reconstruction = total.reconstruction / n;
  out.waviness_l1 = total.l1 / (static_cast<double>(num_skills) * n);
  out.waviness_l2_sq = total.l2 / (static_cast<double>(num_skills) * n);
  out.valid_terms = total.terms;
  return out;
}

}  // namespace

EncodedSequence encode_sequence(const StudentSequence& sequence) {
  EncodedSequence e;
  e.skills.reserve(sequence.size());
  e.correct.reserve(sequence.size());
  for (const auto& it : sequence.interactions) {
    e.skills.push_back(it.skill_id);
    e.correct.push_back(it.correct);
  }
  return e;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ValidationError("learning_rate must lie in (0,1]");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ValidationError("dropout_rate must lie in [0,1)");
  if (!(clip_norm > 0.0)) throw ValidationError("clip_norm must be positive");
  if (lambdas.lambda_r < 0 || lambdas.lambda_w1 < 0 || lambdas.lambda_w2 < 0) {
    throw ValidationError("regularization weights must be non-negative");
  }
  if (hidden == 0 || batch_size == 0 || max_epochs == 0) throw ValidationError("hidden, batch_size and max_epochs must be positive");
  if (!(init_std > 0.0)) throw ValidationError("init_std must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) throw ValidationError("validation_fraction must lie in [0,1)");
  if (segment_length < 2) throw ValidationError("segment_length must be at least 2");
}

DktParams::DktParams(std::size_t num_skills, std::size_t hidden)
    : m_(num_skills), h_(hidden), values_(Eigen::VectorXd::Zero(idx(parameter_count(num_skills, hidden)))) {
  if (num_skills == 0 || hidden == 0) throw ValidationError("shape error: M and H must be positive");
}

std::size_t DktParams::parameter_count(std::size_t m, std::size_t h) {
  return 4 * h * (2 * m + h) + 4 * h + m * h + m;
}

std::size_t DktParams::offset_gate_bias() const { return 4 * h_ * (2 * m_ + h_); }
std::size_t DktParams::offset_output_weights() const { return offset_gate_bias() + 4 * h_; }
std::size_t DktParams::offset_output_bias() const { return offset_output_weights() + m_ * h_; }

Eigen::Map<const Eigen::MatrixXd> DktParams::gate_weights() const {
  return {values_.data(), idx(4 * h_), idx(2 * m_ + h_)};
}
Eigen::Map<const Eigen::VectorXd> DktParams::gate_bias() const {
  return {values_.data() + offset_gate_bias(), idx(4 * h_)};
}
Eigen::Map<const Eigen::MatrixXd> DktParams::output_weights() const {
  return {values_.data() + offset_output_weights(), idx(m_), idx(h_)};
}
Eigen::Map<const Eigen::VectorXd> DktParams::output_bias() const {
  return {values_.data() + offset_output_bias(), idx(m_)};
}
Eigen::Map<Eigen::MatrixXd> DktParams::gate_weights() { return {values_.data(), idx(4 * h_), idx(2 * m_ + h_)}; }
Eigen::Map<Eigen::VectorXd> DktParams::gate_bias() { return {values_.data() + offset_gate_bias(), idx(4 * h_)}; }
Eigen::Map<Eigen::MatrixXd> DktParams::output_weights() {
  return {values_.data() + offset_output_weights(), idx(m_), idx(h_)};
}
Eigen::Map<Eigen::VectorXd> DktParams::output_bias() { return {values_.data() + offset_output_bias(), idx(m_)}; }

DktParams DktParams::random(std::size_t num_skills, std::size_t hidden, double init_std, std::uint64_t seed) {
  DktParams p(num_skills, hidden);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, init_std);
  auto w = p.gate_weights();
  for (Index c = 0; c < w.cols(); ++c)
    for (Index r = 0; r < w.rows(); ++r) w(r, c) = normal(rng);
  auto wo = p.output_weights();
  for (Index c = 0; c < wo.cols(); ++c)
    for (Index r = 0; r < wo.rows(); ++r) wo(r, c) = normal(rng);
  // Forget-gate bias starts at 1; every other bias at 0.
  p.gate_bias().segment(idx(hidden), idx(hidden)).setOnes();
  return p;
}

Eigen::MatrixXd forward(const DktParams& params, const EncodedSequence& sequence, std::optional<DropoutSpec> dropout) {
  const auto tr = run_forward(params, sequence, dropout ? &*dropout : nullptr);
  return tr.output.transpose();
}

LossTerms compute_loss_terms(std::span<const Eigen::MatrixXd> states, std::span<const EncodedSequence> sequences) {
  if (states.size() != sequences.size()) throw ValidationError("shape error: states/sequences count mismatch");
  TermSums total;
  std::size_t m = 0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (i == 0) m = static_cast<std::size_t>(states[i].cols());
    if (static_cast<std::size_t>(states[i].cols()) != m) throw ValidationError("shape error: inconsistent state width");
    const auto s = term_sums(states[i], sequences[i]);
    total.prediction += s.prediction;
    total.reconstruction += s.reconstruction;
    total.l1 += s.l1;
    total.l2 += s.l2;
    total.terms += s.terms;
  }
  return normalize(total, m);
}

double loss_prediction(std::span<const Eigen::MatrixXd> states, std::span<const EncodedSequence> sequences) {
  return compute_loss_terms(states, sequences).prediction;
}

double regularizer_r(std::span<const Eigen::MatrixXd> states, std::span<const EncodedSequence> sequences) {
  return compute_loss_terms(states, sequences).reconstruction;
}

std::pair<double, double> regularizer_w(std::span<const Eigen::MatrixXd> states, std::span<const EncodedSequence> sequences) {
  const auto t = compute_loss_terms(states, sequences);
  return {t.waviness_l1, t.waviness_l2_sq};
}

double loss_total(std::span<const Eigen::MatrixXd> states, std::span<const EncodedSequence> sequences,
                  const RegularizerWeights& weights) {
  return compute_loss_terms(states, sequences).total(weights);
}

LossGradient loss_and_gradient(const DktParams& params, std::span<const EncodedSequence> sequences,
                               const RegularizerWeights& weights, std::optional<DropoutSpec> dropout) {
  const auto m = idx(params.num_skills());
  const auto h = idx(params.hidden());

  std::vector<Trace> traces;
  traces.reserve(sequences.size());
  TermSums total;
  for (std::size_t k = 0; k < sequences.size(); ++k) {
    std::optional<DropoutSpec> spec;
    if (dropout) spec = DropoutSpec{dropout->rate, dropout->seed + k};
    traces.push_back(run_forward(params, sequences[k], spec ? &*spec : nullptr));
    const auto s = term_sums(traces.back().output.transpose(), sequences[k]);
    total.prediction += s.prediction;
    total.reconstruction += s.reconstruction;
    total.l1 += s.l1;
    total.l2 += s.l2;
    total.terms += s.terms;
  }

  LossGradient out;
  out.terms = normalize(total, params.num_skills());
  out.objective = out.terms.total(weights);
  out.gradient = Eigen::VectorXd::Zero(idx(params.size()));

  DktParams grad(params.num_skills(), params.hidden());
  auto dw = grad.gate_weights();
  auto db = grad.gate_bias();
  auto dwo = grad.output_weights();
  auto dbo = grad.output_bias();
  const auto w = params.gate_weights();
  const auto wh = w.rightCols(h);
  const auto wo = params.output_weights();

  const double n = static_cast<double>(total.terms);
  const double wav_scale = 1.0 / (static_cast<double>(m) * n);

  Eigen::VectorXd dh_next(h), dc_next(h), dh(h), dc(h), dz(4 * h), dropped(h);
  for (std::size_t k = 0; k < sequences.size(); ++k) {
    const auto& seq = sequences[k];
    const auto& tr = traces[k];
    const auto t_len = idx(seq.size());

    // dObjective/dy, then through the sigmoid to the output logits.
    Eigen::MatrixXd dy = Eigen::MatrixXd::Zero(m, t_len);
    // Waviness terms act on y; the cross-entropy terms are added at the logit level below.
    for (Index t = 0; t + 1 < t_len; ++t) {
      const Eigen::VectorXd diff = tr.output.col(t + 1) - tr.output.col(t);
      for (Index j = 0; j < m; ++j) {
        const double sgn = diff(j) > 0 ? 1.0 : (diff(j) < 0 ? -1.0 : 0.0);
        const double g = weights.lambda_w1 * wav_scale * sgn + weights.lambda_w2 * wav_scale * 2.0 * diff(j);
        dy(j, t + 1) += g;
        dy(j, t) -= g;
      }
    }
    Eigen::MatrixXd du = dy.cwiseProduct(tr.output.cwiseProduct((1.0 - tr.output.array()).matrix()));
    for (Index t = 0; t + 1 < t_len; ++t) {
      const auto tt = static_cast<std::size_t>(t);
      const auto q_next = idx(seq.skills[tt + 1]);
      const auto q_now = idx(seq.skills[tt]);
      du(q_next, t) += (tr.output(q_next, t) - seq.correct[tt + 1]) / n;
      du(q_now, t) += weights.lambda_r * (tr.output(q_now, t) - seq.correct[tt]) / n;
    }

    dh_next.setZero();
    dc_next.setZero();
    for (Index t = t_len - 1; t >= 0; --t) {
      const auto tt = static_cast<std::size_t>(t);
      dropped = tr.hidden.col(t + 1);
      if (tr.mask.size()) dropped = dropped.cwiseProduct(tr.mask.col(t));
      dwo.noalias() += du.col(t) * dropped.transpose();
      dbo += du.col(t);
      dh.noalias() = wo.transpose() * du.col(t);
      if (tr.mask.size()) dh = dh.cwiseProduct(tr.mask.col(t));
      dh += dh_next;

      const auto g = tr.gates.col(t);
      const auto gi = g.head(h).array();
      const auto gf = g.segment(h, h).array();
      const auto gg = g.segment(2 * h, h).array();
      const auto go = g.tail(h).array();
      const Eigen::ArrayXd tanh_c = tr.cell.col(t + 1).array().tanh();
      dc = (dh.array() * go * (1.0 - tanh_c.square())).matrix() + dc_next;
      dz.head(h) = (dc.array() * gg * gi * (1.0 - gi)).matrix();
      dz.segment(h, h) = (dc.array() * tr.cell.col(t).array() * gf * (1.0 - gf)).matrix();
      dz.segment(2 * h, h) = (dc.array() * gi * (1.0 - gg.square())).matrix();
      dz.tail(h) = (dh.array() * tanh_c * go * (1.0 - go)).matrix();
      dc_next = (dc.array() * gf).matrix();

      const auto q = idx(seq.skills[tt]);
      dw.col(q) += dz;
      if (seq.correct[tt]) dw.col(m + q) += dz;
      dw.rightCols(h).noalias() += dz * tr.hidden.col(t).transpose();
      db += dz;
      dh_next.noalias() = wh.transpose() * dz;
    }
  }
  out.gradient = grad.values();
  return out;
}

double gradient_check(const DktParams& params, std::span<const EncodedSequence> sequences,
                      const RegularizerWeights& weights, double epsilon) {
  const auto analytic = loss_and_gradient(params, sequences, weights);
  DktParams probe = params;
  double worst = 0.0;
  const auto objective = [&](const DktParams& p) {
    std::vector<Eigen::MatrixXd> ys;
    ys.reserve(sequences.size());
    for (const auto& s : sequences) ys.push_back(forward(p, s));
    return compute_loss_terms(ys, sequences).total(weights);
  };
  for (Index i = 0; i < probe.values().size(); ++i) {
    const double saved = probe.values()(i);
    probe.values()(i) = saved + epsilon;
    const double up = objective(probe);
    probe.values()(i) = saved - epsilon;
    const double down = objective(probe);
    probe.values()(i) = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double a = analytic.gradient(i);
    const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-6});
    worst = std::max(worst, std::fabs(a - numeric) / denom);
  }
  return worst;
}

std::vector<EncodedSequence> split_segments(const std::vector<EncodedSequence>& sequences, std::size_t max_length) {
  std::vector<EncodedSequence> out;
  for (const auto& s : sequences) {
    for (std::size_t start = 0; start < s.size(); start += max_length) {
      const auto end = std::min(s.size(), start + max_length);
      EncodedSequence seg;
      seg.skills.assign(s.skills.begin() + static_cast<std::ptrdiff_t>(start), s.skills.begin() + static_cast<std::ptrdiff_t>(end));
      seg.correct.assign(s.correct.begin() + static_cast<std::ptrdiff_t>(start), s.correct.begin() + static_cast<std::ptrdiff_t>(end));
      out.push_back(std::move(seg));
    }
  }
  return out;
}

void next_step_predictions(const DktParams& params, std::span<const EncodedSequence> sequences,
                           std::vector<double>& scores, std::vector<int>& targets) {
  for (const auto& s : sequences) {
    const auto y = forward(params, s);
    for (std::size_t t = 0; t + 1 < s.size(); ++t) {
      scores.push_back(y(idx(t), idx(s.skills[t + 1])));
      targets.push_back(s.correct[t + 1]);
    }
  }
}

namespace {

LossTerms evaluate_terms(const DktParams& params, std::span<const EncodedSequence> sequences) {
  std::vector<Eigen::MatrixXd> ys;
  ys.reserve(sequences.size());
  for (const auto& s : sequences) ys.push_back(forward(params, s));
  return compute_loss_terms(ys, sequences);
}

// Next-step AUC, or negative next-step loss when the AUC is undefined.
double validation_score(const DktParams& params, std::span<const EncodedSequence> sequences) {
  std::vector<double> scores;
  std::vector<int> targets;
  next_step_predictions(params, sequences, scores, targets);
  const bool both = std::count(targets.begin(), targets.end(), 1) > 0 &&
                    std::count(targets.begin(), targets.end(), 0) > 0;
  if (both) return auc(scores, targets);
  return -evaluate_terms(params, sequences).prediction;
}

}  // namespace

TrainResult train(const std::vector<EncodedSequence>& sequences, std::size_t num_skills, const TrainConfig& config) {
  config.validate();
  if (sequences.empty()) throw ValidationError("train: no sequences");
  if (num_skills == 0) throw ValidationError("train: number of skills must be positive");
  std::mt19937_64 rng(config.seed);

  std::vector<std::size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  auto n_val = static_cast<std::size_t>(std::floor(config.validation_fraction * static_cast<double>(sequences.size())));
  if (n_val >= sequences.size()) n_val = sequences.size() - 1;
  std::vector<EncodedSequence> train_full, validation;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_val ? validation : train_full).push_back(sequences[order[i]]);
  }
  if (validation.empty()) validation = train_full;

  std::vector<EncodedSequence> segments;
  for (auto& s : split_segments(train_full, config.segment_length)) {
    if (s.size() >= 2) segments.push_back(std::move(s));
  }
  if (segments.empty()) throw ValidationError("train: no training sequence has length >= 2");

  TrainResult result;
  DktParams params = DktParams::random(num_skills, config.hidden, config.init_std, rng());
  Eigen::VectorXd adam_m = Eigen::VectorXd::Zero(idx(params.size()));
  Eigen::VectorXd adam_v = Eigen::VectorXd::Zero(idx(params.size()));
  std::size_t step = 0;

  EpochRecord initial;
  initial.train = evaluate_terms(params, segments);
  initial.validation_auc = validation_score(params, validation);
  result.log.push_back(initial);
  result.params = params;
  double best = initial.validation_auc;
  std::size_t since_best = 0;

  std::vector<std::size_t> batch_order(segments.size());
  std::iota(batch_order.begin(), batch_order.end(), std::size_t{0});
  std::vector<EncodedSequence> batch;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(batch_order.begin(), batch_order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t start = 0; start < batch_order.size(); start += config.batch_size) {
      batch.clear();
      const auto end = std::min(batch_order.size(), start + config.batch_size);
      for (std::size_t i = start; i < end; ++i) batch.push_back(segments[batch_order[i]]);
      std::optional<DropoutSpec> dropout;
      if (config.dropout_rate > 0.0) dropout = DropoutSpec{config.dropout_rate, rng()};
      auto lg = loss_and_gradient(params, batch, config.lambdas, dropout);
      if (!std::isfinite(lg.objective) || !lg.gradient.allFinite()) {
        throw NumericalError("training diverged at epoch " + std::to_string(epoch));
      }
      const double norm = lg.gradient.norm();
      rec.max_raw_norm = std::max(rec.max_raw_norm, norm);
      if (norm > config.clip_norm) lg.gradient *= config.clip_norm / norm;
      rec.max_clipped_norm = std::max(rec.max_clipped_norm, lg.gradient.norm());

      ++step;
      if (config.optimizer == Optimizer::kSgd) {
        params.values() -= config.learning_rate * lg.gradient;
      } else {
        constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
        adam_m = kBeta1 * adam_m + (1.0 - kBeta1) * lg.gradient;
        adam_v = kBeta2 * adam_v + (1.0 - kBeta2) * lg.gradient.cwiseAbs2();
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
        params.values().array() -=
            config.learning_rate * (adam_m.array() / c1) / ((adam_v.array() / c2).sqrt() + kEps);
      }
      if (!params.values().allFinite()) throw NumericalError("training diverged at epoch " + std::to_string(epoch));
    }
    rec.train = evaluate_terms(params, segments);
    if (!std::isfinite(rec.train.total(config.lambdas))) {
      throw NumericalError("training diverged at epoch " + std::to_string(epoch));
    }
    rec.validation_auc = validation_score(params, validation);
    result.log.push_back(rec);
    if (rec.validation_auc > best) {
      best = rec.validation_auc;
      result.params = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

void write_training_log(std::ostream& out, const std::vector<EpochRecord>& log) {
  out << "epoch,L,r,w1,w2_sq,val_auc,max_clipped_grad_norm\n";
  for (const auto& r : log) {
    out << r.epoch << ',' << detail::format_exact(r.train.prediction) << ','
        << detail::format_exact(r.train.reconstruction) << ',' << detail::format_exact(r.train.waviness_l1) << ','
        << detail::format_exact(r.train.waviness_l2_sq) << ',' << detail::format_exact(r.validation_auc) << ','
        << detail::format_exact(r.max_clipped_norm) << '\n';
  }
}

namespace {
constexpr const char* kCheckpointTag = "ktcareer-dkt-checkpoint";
constexpr int kCheckpointVersion = 1;
}  // namespace

void save_checkpoint(const std::filesystem::path& path, const DktParams& params, const TrainConfig& c) {
  auto out = detail::open_output(path);
  out << kCheckpointTag << ' ' << kCheckpointVersion << '\n';
  out << "num_skills " << params.num_skills() << '\n';
  out << "hidden " << params.hidden() << '\n';
  out << "config learning_rate " << detail::format_exact(c.learning_rate) << '\n';
  out << "config dropout_rate " << detail::format_exact(c.dropout_rate) << '\n';
  out << "config clip_norm " << detail::format_exact(c.clip_norm) << '\n';
  out << "config lambda_r " << detail::format_exact(c.lambdas.lambda_r) << '\n';
  out << "config lambda_w1 " << detail::format_exact(c.lambdas.lambda_w1) << '\n';
  out << "config lambda_w2 " << detail::format_exact(c.lambdas.lambda_w2) << '\n';
  out << "config batch_size " << c.batch_size << '\n';
  out << "config max_epochs " << c.max_epochs << '\n';
  out << "config patience " << c.patience << '\n';
  out << "config init_std " << detail::format_exact(c.init_std) << '\n';
  out << "config validation_fraction " << detail::format_exact(c.validation_fraction) << '\n';
  out << "config segment_length " << c.segment_length << '\n';
  out << "config optimizer " << (c.optimizer == Optimizer::kAdam ? "adam" : "sgd") << '\n';
  out << "config seed " << c.seed << '\n';
  out << "values " << params.size() << '\n';
  for (Index i = 0; i < params.values().size(); ++i) out << detail::format_exact(params.values()(i)) << '\n';
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

DktParams load_checkpoint(const std::filesystem::path& path, TrainConfig* config) {
  auto in = detail::open_input(path);
  std::string tag;
  int version = 0;
  in >> tag >> version;
  if (tag != kCheckpointTag) throw ValidationError("'" + path.string() + "' is not a DKT checkpoint");
  if (version != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  }
  std::size_t m = 0, h = 0;
  TrainConfig c;
  std::string key;
  while (in >> key) {
    if (key == "num_skills") {
      in >> m;
    } else if (key == "hidden") {
      in >> h;
    } else if (key == "config") {
      std::string name, value;
      in >> name >> value;
      const auto num = detail::parse_double(value);
      if (name == "optimizer") {
        c.optimizer = value == "adam" ? Optimizer::kAdam : Optimizer::kSgd;
      } else if (!num) {
        throw ValidationError("checkpoint: bad config value for " + name);
      } else if (name == "learning_rate") {
        c.learning_rate = *num;
      } else if (name == "dropout_rate") {
        c.dropout_rate = *num;
      } else if (name == "clip_norm") {
        c.clip_norm = *num;
      } else if (name == "lambda_r") {
        c.lambdas.lambda_r = *num;
      } else if (name == "lambda_w1") {
        c.lambdas.lambda_w1 = *num;
      } else if (name == "lambda_w2") {
        c.lambdas.lambda_w2 = *num;
      } else if (name == "batch_size") {
        c.batch_size = static_cast<std::size_t>(*num);
      } else if (name == "max_epochs") {
        c.max_epochs = static_cast<std::size_t>(*num);
      } else if (name == "patience") {
        c.patience = static_cast<std::size_t>(*num);
      } else if (name == "init_std") {
        c.init_std = *num;
      } else if (name == "validation_fraction") {
        c.validation_fraction = *num;
      } else if (name == "segment_length") {
        c.segment_length = static_cast<std::size_t>(*num);
      } else if (name == "seed") {
        c.seed = static_cast<std::uint64_t>(std::stoull(value));
      }
    } else if (key == "values") {
      break;
    } else {
      throw ValidationError("checkpoint: unexpected key '" + key + "'");
    }
  }
  std::size_t count = 0;
  in >> count;
  DktParams p(m, h);
  if (count != p.size()) throw ValidationError("checkpoint: weight count does not match M and H");
  std::string token;
  for (Index i = 0; i < p.values().size(); ++i) {
    if (!(in >> token)) throw ValidationError("checkpoint: truncated weight array");
    const auto v = detail::parse_double(token);
    if (!v || !std::isfinite(*v)) throw ValidationError("checkpoint: invalid weight value");
    p.values()(i) = *v;
  }
  c.hidden = h;
  if (config) *config = c;
  return p;
}

}  // namespace ktc
