#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ktcareer/data_model.hpp"

namespace ktc {

// Skill ids and correctness of one student's interactions, ready for the network.
struct EncodedSequence {
  std::vector<std::size_t> skills;
  std::vector<int> correct;

  std::size_t size() const { return skills.size(); }
};

EncodedSequence encode_sequence(const StudentSequence& sequence);

enum class Optimizer { kSgd, kAdam };

struct RegularizerWeights {
  double lambda_r = 0.0;
  double lambda_w1 = 0.0;
  double lambda_w2 = 0.0;

  static RegularizerWeights dkt() { return {}; }
  static RegularizerWeights dkt_plus() { return {0.1, 0.3, 3.0}; }
};

struct TrainConfig {
  double learning_rate = 0.01;
  double dropout_rate = 0.5;
  double clip_norm = 3.0;
  RegularizerWeights lambdas = RegularizerWeights::dkt_plus();
  std::size_t hidden = 200;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  double init_std = 0.05;
  double validation_fraction = 0.2;
  std::size_t segment_length = 200;
  Optimizer optimizer = Optimizer::kAdam;
  std::uint64_t seed = 7;

  void validate() const;
};

// LSTM + sigmoid output layer. All weights live in one flat vector:
//   gate weights (4H x (2M+H), column-major; gate blocks i, f, g, o; input
//   columns [0,2M) then recurrent columns [2M,2M+H)), gate bias (4H),
//   output weights (M x H, column-major), output bias (M).
class DktParams {
 public:
  DktParams() = default;
  DktParams(std::size_t num_skills, std::size_t hidden);

  static DktParams random(std::size_t num_skills, std::size_t hidden, double init_std, std::uint64_t seed);

  std::size_t num_skills() const { return m_; }
  std::size_t hidden() const { return h_; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }

  Eigen::VectorXd& values() { return values_; }
  const Eigen::VectorXd& values() const { return values_; }

  Eigen::Map<const Eigen::MatrixXd> gate_weights() const;
  Eigen::Map<const Eigen::VectorXd> gate_bias() const;
  Eigen::Map<const Eigen::MatrixXd> output_weights() const;
  Eigen::Map<const Eigen::VectorXd> output_bias() const;

  Eigen::Map<Eigen::MatrixXd> gate_weights();
  Eigen::Map<Eigen::VectorXd> gate_bias();
  Eigen::Map<Eigen::MatrixXd> output_weights();
  Eigen::Map<Eigen::VectorXd> output_bias();

  static std::size_t parameter_count(std::size_t num_skills, std::size_t hidden);

 private:
  std::size_t offset_gate_bias() const;
  std::size_t offset_output_weights() const;
  std::size_t offset_output_bias() const;

  std::size_t m_ = 0;
  std::size_t h_ = 0;
  Eigen::VectorXd values_;
};

// Dropout on the hidden-to-output connection, active only when set.
struct DropoutSpec {
  double rate = 0.0;
  std::uint64_t seed = 0;
};

// Knowledge states Y (T x M), one row per interaction.
Eigen::MatrixXd forward(const DktParams& params, const EncodedSequence& sequence,
                        std::optional<DropoutSpec> dropout = std::nullopt);

struct LossTerms {
  double prediction = 0.0;  // L
  double reconstruction = 0.0;  // r
  double waviness_l1 = 0.0;  // w1
  double waviness_l2_sq = 0.0;  // w2^2
  std::size_t valid_terms = 0;  // sum of (T_i - 1)

  double total(const RegularizerWeights& w) const {
    return prediction + w.lambda_r * reconstruction + w.lambda_w1 * waviness_l1 + w.lambda_w2 * waviness_l2_sq;
  }
};

// Batched loss terms; throws when the batch has no valid (T >= 2) terms.
LossTerms compute_loss_terms(std::span<const Eigen::MatrixXd> states, std::span<const EncodedSequence> sequences);

double loss_prediction(std::span<const Eigen::MatrixXd> states, std::span<const EncodedSequence> sequences);
double regularizer_r(std::span<const Eigen::MatrixXd> states, std::span<const EncodedSequence> sequences);
std::pair<double, double> regularizer_w(std::span<const Eigen::MatrixXd> states, std::span<const EncodedSequence> sequences);
double loss_total(std::span<const Eigen::MatrixXd> states, std::span<const EncodedSequence> sequences,
                  const RegularizerWeights& weights);

struct LossGradient {
  LossTerms terms;
  double objective = 0.0;
  Eigen::VectorXd gradient;  // same layout as DktParams::values()
};

// L' and its gradient by backpropagation through time. With dropout set, each
// sequence k uses mask seed (dropout.seed + k).
LossGradient loss_and_gradient(const DktParams& params, std::span<const EncodedSequence> sequences,
                               const RegularizerWeights& weights,
                               std::optional<DropoutSpec> dropout = std::nullopt);

// Max relative error between the analytic gradient and central differences
// over every parameter. |a - n| / max(|a|, |n|, 1e-6).
double gradient_check(const DktParams& params, std::span<const EncodedSequence> sequences,
                      const RegularizerWeights& weights, double epsilon = 1e-5);

struct EpochRecord {
  std::size_t epoch = 0;
  LossTerms train;
  double validation_auc = 0.0;
  double max_clipped_norm = 0.0;  // largest global gradient norm after clipping
  double max_raw_norm = 0.0;
};

struct TrainResult {
  DktParams params;  // best-validation parameters
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
};

// Splits sequences longer than `max_length` into consecutive independent segments.
std::vector<EncodedSequence> split_segments(const std::vector<EncodedSequence>& sequences, std::size_t max_length);

// Pooled next-step predictions y_t[q_{t+1}] and targets a_{t+1}.
void next_step_predictions(const DktParams& params, std::span<const EncodedSequence> sequences,
                           std::vector<double>& scores, std::vector<int>& targets);

TrainResult train(const std::vector<EncodedSequence>& sequences, std::size_t num_skills, const TrainConfig& config);

void write_training_log(std::ostream& out, const std::vector<EpochRecord>& log);

// Versioned checkpoint: format tag, config echo, M, H and the flat weight vector.
void save_checkpoint(const std::filesystem::path& path, const DktParams& params, const TrainConfig& config);
DktParams load_checkpoint(const std::filesystem::path& path, TrainConfig* config = nullptr);

}  // namespace ktc
