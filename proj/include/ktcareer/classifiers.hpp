#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "ktcareer/features.hpp"

namespace ktc {

enum class Family { kGbdt, kLda, kLr, kSvm };
enum class LdaSolver { kSvd, kLsqr, kEigen };
enum class Penalty { kL1, kL2 };

const char* to_string(Family family);
const char* to_string(LdaSolver solver);
const char* to_string(Penalty penalty);
Family parse_family(std::string_view text);

struct GbdtParams {
  std::size_t trees = 100;
  std::size_t max_depth = 3;
  std::size_t min_leaf = 1;
  double shrinkage = 0.1;
};

struct LdaParams {
  LdaSolver solver = LdaSolver::kSvd;
};

// Minimizes penalty(w) + C * sum(log-loss); the intercept is not penalized.
struct LrParams {
  double c = 1.0;
  Penalty penalty = Penalty::kL2;
  double tolerance = 1e-8;
  std::size_t max_iterations = 1000;
};

struct SvmParams {
  double c = 1.0;
  std::optional<double> gamma;  // default 1 / (features * variance of X)
  double tolerance = 1e-3;
  std::size_t calibration_folds = 5;
  std::uint64_t seed = 0;
};

struct ClassifierSpec {
  Family family = Family::kLr;
  GbdtParams gbdt;
  LdaParams lda;
  LrParams lr;
  SvmParams svm;
  // z-score features with training statistics before fitting; default on for
  // every family except GBDT.
  std::optional<bool> standardize;

  bool uses_standardization() const { return standardize.value_or(family != Family::kGbdt); }
  std::string describe() const;
  void validate() const;

  static ClassifierSpec gbdt_spec(std::size_t trees, std::size_t depth, std::size_t min_leaf);
  static ClassifierSpec lda_spec(LdaSolver solver);
  static ClassifierSpec lr_spec(double c, Penalty penalty);
  static ClassifierSpec svm_spec(double c);
};

struct RegressionTree {
  struct Node {
    int feature = -1;  // -1 for leaves
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };
  std::vector<Node> nodes;

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

struct GbdtModel {
  double initial_score = 0.0;  // prior log-odds
  double shrinkage = 0.1;
  std::vector<RegressionTree> trees;
  Eigen::VectorXd importances;  // normalized total split gain per feature
  std::vector<double> stage_losses;  // mean training log-loss after each stage, [0] = prior only
};

struct LinearModel {
  Eigen::VectorXd coef;
  double intercept = 0.0;
};

struct SvmModel {
  Eigen::MatrixXd support_vectors;
  Eigen::VectorXd dual_coef;  // alpha_i * y_i
  double rho = 0.0;           // decision = sum dual_coef K(sv, x) - rho
  double gamma = 1.0;
  double platt_a = -1.0;      // P(y=1|f) = 1 / (1 + exp(A f + B))
  double platt_b = 0.0;
  double kkt_gap = 0.0;       // m(alpha) - M(alpha) at termination
};

class TrainedClassifier {
 public:
  Family family() const { return spec_.family; }
  const ClassifierSpec& spec() const { return spec_; }
  const std::vector<std::string>& schema() const { return schema_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const std::optional<Standardizer>& standardizer() const { return standardizer_; }
  const GbdtModel* gbdt() const { return std::get_if<GbdtModel>(&model_); }
  const LinearModel* linear() const { return std::get_if<LinearModel>(&model_); }
  const SvmModel* svm() const { return std::get_if<SvmModel>(&model_); }

  // Raw decision value (log-odds for GBDT/LR/LDA, SVM margin) per row.
  Eigen::VectorXd decision_function(const Eigen::MatrixXd& x) const;

 private:
  friend TrainedClassifier fit(const ClassifierSpec&, const Eigen::MatrixXd&, std::span<const int>,
                               std::vector<std::string>);
  friend TrainedClassifier load_classifier(const std::filesystem::path&);
  friend TrainedClassifier make_linear_classifier(Family, Eigen::VectorXd, double);
  friend TrainedClassifier make_gbdt_classifier(GbdtModel);

  ClassifierSpec spec_;
  std::vector<std::string> schema_;
  std::vector<std::string> warnings_;
  std::optional<Standardizer> standardizer_;
  std::variant<std::monostate, GbdtModel, LinearModel, SvmModel> model_;
};

TrainedClassifier fit(const ClassifierSpec& spec, const Eigen::MatrixXd& x, std::span<const int> labels,
                      std::vector<std::string> schema = {});

// Hand-built models, without standardization.
TrainedClassifier make_linear_classifier(Family family, Eigen::VectorXd coef, double intercept);
TrainedClassifier make_gbdt_classifier(GbdtModel model);

// P(class 1) per row.
Eigen::VectorXd predict_proba(const TrainedClassifier& model, const Eigen::MatrixXd& x);
// Checks the matrix schema against the training schema first.
Eigen::VectorXd predict_proba(const TrainedClassifier& model, const FeatureMatrix& features);

// 0/1 labels; a probability of exactly 0.5 maps to class 0.
std::vector<int> predict(const TrainedClassifier& model, const Eigen::MatrixXd& x);

// Linear coefficients (LR, LDA) or importances (GBDT); nullopt for SVM-RBF.
std::optional<Eigen::VectorXd> coefficients(const TrainedClassifier& model);

struct SvmDualSolution {
  Eigen::VectorXd alpha;
  double rho = 0.0;
  double kkt_gap = 0.0;
  std::size_t iterations = 0;
};

// SMO with second-order working-set selection on a precomputed kernel; y in {0,1}.
SvmDualSolution solve_svm_dual(const Eigen::MatrixXd& kernel, std::span<const int> labels, double c, double tolerance);

Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double gamma);

// Sigmoid calibration (A, B) of decision values by Newton's method with
// smoothed targets.
std::pair<double, double> fit_platt(std::span<const double> decision, std::span<const int> labels);

void save_classifier(const std::filesystem::path& path, const TrainedClassifier& model);
TrainedClassifier load_classifier(const std::filesystem::path& path);

}  // namespace ktc
