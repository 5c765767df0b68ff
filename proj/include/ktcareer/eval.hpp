#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ktcareer/classifiers.hpp"
#include "ktcareer/metrics.hpp"

namespace ktc {

// Fold index in [0, k) per sample. Each class is shuffled and dealt
// round-robin, so per-fold class counts differ by at most one.
std::vector<std::size_t> stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed);

struct FoldMetrics {
  double ap = 0.0, auc = 0.0, rmse = 0.0, combined = 0.0;
};

FoldMetrics score_predictions(std::span<const double> probabilities, std::span<const int> labels);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over folds
};

Summary summarize(std::span<const double> values);

struct MetricSummary {
  Summary ap, auc, rmse, combined;
};

struct CvResult {
  ClassifierSpec spec;
  std::vector<FoldMetrics> train_folds;
  std::vector<FoldMetrics> test_folds;
  MetricSummary train;
  MetricSummary test;
};

// Fits on k-1 folds and scores both the training and held-out part of each fold.
CvResult cross_validate(const ClassifierSpec& spec, const Eigen::MatrixXd& x, std::span<const int> labels,
                        std::span<const std::size_t> folds, std::size_t k);

// Grids over tree count x depth x min leaf, LDA solvers, LR C x penalty and SVM C.
std::vector<ClassifierSpec> default_grid(Family family);

struct GridSearchResult {
  std::size_t best_index = 0;
  ClassifierSpec best;
  std::vector<CvResult> results;  // one per grid point, grid order
};

// Every grid point is scored on the same folds; the highest mean test
// combined score wins, ties going to the earliest grid point.
GridSearchResult grid_search(std::span<const ClassifierSpec> grid, const Eigen::MatrixXd& x,
                             std::span<const int> labels, std::size_t k, std::uint64_t seed);

struct NestedCvResult {
  MetricSummary test;
  std::vector<std::size_t> chosen_index;  // grid point picked in each outer fold
};

// Grid search inside each outer training split, scored on the outer test fold.
NestedCvResult nested_cross_validate(std::span<const ClassifierSpec> grid, const Eigen::MatrixXd& x,
                                     std::span<const int> labels, std::size_t k, std::uint64_t seed);

struct RfeResult {
  std::vector<std::size_t> elimination_order;  // first element dropped first
  std::map<std::size_t, std::vector<std::size_t>> subsets;  // size -> retained column indices (ascending)
  std::map<std::size_t, double> cv_combined;  // size -> mean test combined score
  std::size_t best_size = 0;
};

// Recursive feature elimination with step 1: refit on the retained columns and
// drop the one with the smallest |coefficient| (or importance). Sizes larger
// than the feature count are ignored; the full size is always evaluated.
RfeResult rfe(const ClassifierSpec& spec, const Eigen::MatrixXd& x, std::span<const int> labels,
              std::vector<std::size_t> target_sizes, std::size_t k, std::uint64_t seed);

std::vector<std::size_t> default_rfe_sizes();

struct EvalRow {
  std::string model;     // e.g. "LR"
  std::string features;  // e.g. "DKT+&SP"
  std::string spec;
  bool standardized = false;
  MetricSummary train;
  MetricSummary test;
  std::optional<Summary> nested_combined;
  std::vector<std::string> selected_features;
};

// Model,Features,Split,AP,AP_std,AUC,AUC_std,RMSE,RMSE_std,Combined,Combined_std,...
void write_eval_report(std::ostream& out, std::span<const EvalRow> rows);

}  // namespace ktc
