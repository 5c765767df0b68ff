#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ktcareer/data_model.hpp"
#include "ktcareer/dkt.hpp"

namespace ktc {

enum class FeatureMode { kProfile, kKnowledge, kCombined };

const char* to_string(FeatureMode mode);

struct FeatureVector {
  std::vector<double> values;
  std::vector<std::string> schema;
};

// y_T of a full, dropout-free forward pass.
Eigen::VectorXd extract_last_state(const DktParams& params, const EncodedSequence& sequence);

// Profile values (kProfileFeatureNames order) and/or the knowledge state,
// profile first. `skill_names` names the knowledge-state entries.
FeatureVector build_features(const StudentProfile& profile, std::span<const double> last_state,
                             FeatureMode mode, std::span<const std::string> skill_names);

std::vector<std::string> feature_schema(FeatureMode mode, std::span<const std::string> skill_names);

struct FeatureMatrix {
  std::vector<std::string> schema;
  std::vector<std::string> student_ids;
  Eigen::MatrixXd values;
  std::vector<int> labels;

  // Copy restricted to the given columns, in the given order.
  FeatureMatrix select_columns(std::span<const std::size_t> columns) const;
};

// student_id, schema..., label
void write_feature_matrix(std::ostream& out, const FeatureMatrix& matrix);
void write_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& matrix);
FeatureMatrix read_feature_matrix(const std::filesystem::path& path);

// Per-column z-score fitted on training rows only. Zero-variance columns pass
// through untouched and are flagged.
class Standardizer {
 public:
  static Standardizer fit(const Eigen::MatrixXd& train);
  // Rebuilds saved statistics; a column with mean 0 and scale 1 counts as constant.
  static Standardizer restore(Eigen::VectorXd mean, Eigen::VectorXd scale);

  Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const;
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& scale() const { return scale_; }
  const std::vector<bool>& constant_columns() const { return constant_; }

 private:
  Eigen::VectorXd mean_;
  Eigen::VectorXd scale_;
  std::vector<bool> constant_;
};

struct StandardizedPair {
  Eigen::MatrixXd train;
  Eigen::MatrixXd apply;
  Standardizer standardizer;
};

StandardizedPair standardize(const Eigen::MatrixXd& train, const Eigen::MatrixXd& apply);

}  // namespace ktc
