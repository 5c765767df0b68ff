#include "ktcareer/features.hpp"

#include <cmath>
#include <fstream>

#include "ktcareer/error.hpp"
#include "text_io.hpp"

namespace ktc {

const char* to_string(FeatureMode mode) {
  switch (mode) {
    case FeatureMode::kProfile: return "SP";
    case FeatureMode::kKnowledge: return "KT";
    case FeatureMode::kCombined: return "KT&SP";
  }
  return "?";
}

Eigen::VectorXd extract_last_state(const DktParams& params, const EncodedSequence& sequence) {
  if (sequence.size() == 0) throw ValidationError("cannot extract a knowledge state from an empty sequence");
  const auto y = forward(params, sequence);
  return y.row(y.rows() - 1).transpose();
}

std::vector<std::string> feature_schema(FeatureMode mode, std::span<const std::string> skill_names) {
  std::vector<std::string> schema;
  if (mode != FeatureMode::kKnowledge) {
    for (auto n : kProfileFeatureNames) schema.emplace_back(n);
  }
  if (mode != FeatureMode::kProfile) schema.insert(schema.end(), skill_names.begin(), skill_names.end());
  return schema;
}

FeatureVector build_features(const StudentProfile& profile, std::span<const double> last_state, FeatureMode mode,
                             std::span<const std::string> skill_names) {
  FeatureVector fv;
  fv.schema = feature_schema(mode, skill_names);
  if (mode != FeatureMode::kKnowledge) {
    const auto values = profile.feature_values();
    fv.values.assign(values.begin(), values.end());
  }
  if (mode != FeatureMode::kProfile) {
    if (last_state.size() != skill_names.size()) {
      throw ValidationError("knowledge state has " + std::to_string(last_state.size()) + " entries but " +
                            std::to_string(skill_names.size()) + " skill names were given");
    }
    fv.values.insert(fv.values.end(), last_state.begin(), last_state.end());
  }
  for (std::size_t i = 0; i < fv.values.size(); ++i) {
    if (std::isnan(fv.values[i])) {
      throw ValidationError("feature '" + fv.schema[i] + "' of student '" + profile.student_id + "' is NaN");
    }
  }
  return fv;
}

FeatureMatrix FeatureMatrix::select_columns(std::span<const std::size_t> columns) const {
  FeatureMatrix out;
  out.student_ids = student_ids;
  out.labels = labels;
  out.values.resize(values.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j] >= schema.size()) throw ValidationError("column index out of range");
    out.schema.push_back(schema[columns[j]]);
    out.values.col(static_cast<Eigen::Index>(j)) = values.col(static_cast<Eigen::Index>(columns[j]));
  }
  return out;
}

void write_feature_matrix(std::ostream& out, const FeatureMatrix& m) {
  out << "student_id";
  for (const auto& name : m.schema) out << ',' << name;
  out << ",label\n";
  for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
    out << m.student_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.values.cols(); ++j) out << ',' << detail::format_exact(m.values(i, j));
    out << ',' << m.labels[static_cast<std::size_t>(i)] << '\n';
  }
}

void write_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& m) {
  auto out = detail::open_output(path);
  write_feature_matrix(out, m);
}

FeatureMatrix read_feature_matrix(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::string line;
  if (!detail::read_header(in, line)) throw ValidationError("empty feature matrix '" + path.string() + "'");
  auto header = detail::split_fields(line);
  if (header.size() < 3 || header.front() != "student_id" || header.back() != "label") {
    throw ValidationError("feature matrix header must be student_id,<features>,label");
  }
  FeatureMatrix m;
  m.schema.assign(header.begin() + 1, header.end() - 1);
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_line_ending(line);
    if (line.empty()) continue;
    const auto fields = detail::split_fields(line);
    if (fields.size() != header.size()) {
      throw ValidationError("feature matrix line " + std::to_string(line_no) + ": wrong field count");
    }
    m.student_ids.push_back(fields.front());
    std::vector<double> row;
    for (std::size_t j = 1; j + 1 < fields.size(); ++j) {
      const auto v = detail::parse_double(fields[j]);
      if (!v) throw ValidationError("feature matrix line " + std::to_string(line_no) + ": bad value in '" + header[j] + "'");
      row.push_back(*v);
    }
    if (fields.back() != "0" && fields.back() != "1") {
      throw ValidationError("feature matrix line " + std::to_string(line_no) + ": label must be 0 or 1");
    }
    m.labels.push_back(fields.back() == "1" ? 1 : 0);
    rows.push_back(std::move(row));
  }
  m.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m.schema.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < m.schema.size(); ++j)
      m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& train) {
  if (train.rows() == 0) throw ValidationError("standardize: empty training matrix");
  Standardizer s;
  const auto n = static_cast<double>(train.rows());
  s.mean_ = train.colwise().mean().transpose();
  s.scale_ = Eigen::VectorXd::Ones(train.cols());
  s.constant_.assign(static_cast<std::size_t>(train.cols()), false);
  for (Eigen::Index j = 0; j < train.cols(); ++j) {
    const double var = (train.col(j).array() - s.mean_(j)).square().sum() / n;
    const double sd = std::sqrt(var);
    if (!(sd > 1e-12 * std::max(1.0, std::fabs(s.mean_(j))))) {
      s.constant_[static_cast<std::size_t>(j)] = true;
      s.mean_(j) = 0.0;
    } else {
      s.scale_(j) = sd;
    }
  }
  return s;
}

Standardizer Standardizer::restore(Eigen::VectorXd mean, Eigen::VectorXd scale) {
  if (mean.size() != scale.size()) throw ValidationError("standardizer: mean/scale length mismatch");
  Standardizer s;
  s.constant_.assign(static_cast<std::size_t>(mean.size()), false);
  for (Eigen::Index j = 0; j < mean.size(); ++j) {
    if (!(scale(j) > 0)) throw ValidationError("standardizer: scale must be positive");
    s.constant_[static_cast<std::size_t>(j)] = mean(j) == 0.0 && scale(j) == 1.0;
  }
  s.mean_ = std::move(mean);
  s.scale_ = std::move(scale);
  return s;
}

Eigen::MatrixXd Standardizer::transform(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean_.size()) throw ValidationError("standardize: column count mismatch");
  Eigen::MatrixXd out = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j) out.col(j) = (x.col(j).array() - mean_(j)) / scale_(j);
  return out;
}

StandardizedPair standardize(const Eigen::MatrixXd& train, const Eigen::MatrixXd& apply) {
  auto s = Standardizer::fit(train);
  return {s.transform(train), s.transform(apply), s};
}

}  // namespace ktc
