#pragma once

#include <span>

namespace ktc {

// Area under the ROC curve; tied scores get half credit (Mann-Whitney).
double auc(std::span<const double> scores, std::span<const int> labels);

double rmse(std::span<const double> probabilities, std::span<const int> labels);

// Sum over descending score thresholds of (R_k - R_{k-1}) P_k, tied scores
// forming a single threshold.
double average_precision(std::span<const double> scores, std::span<const int> labels);

// AUC + (1 - RMSE).
inline double combined_score(double auc_value, double rmse_value) { return auc_value + (1.0 - rmse_value); }

}  // namespace ktc
