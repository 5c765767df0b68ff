#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace ktc {

// Regularized incomplete beta function I_x(a, b).
double regularized_incomplete_beta(double a, double b, double x);

// CDF of Student's t distribution with `df` degrees of freedom.
double student_t_cdf(double t, double df);

enum class VarianceModel { kPooled, kWelch };

struct TTestResult {
  double t_score = 0.0;
  double p_value = 1.0;  // two-sided
  double cohens_d = 0.0;
  double df = 0.0;
  double mean_a = 0.0, mean_b = 0.0;
  double std_a = 0.0, std_b = 0.0;  // sample standard deviations
  std::size_t n_a = 0, n_b = 0;
  bool degenerate = false;  // zero variance in both samples
};

// Two-sample t-test of a against b; the statistic is positive when mean(a) > mean(b).
// Cohen's d always uses the pooled standard deviation.
TTestResult t_test(std::span<const double> a, std::span<const double> b,
                   VarianceModel model = VarianceModel::kPooled);

// Upper-tail p-value for H1: mean(a) > mean(b).
double one_tailed_mean_test(std::span<const double> a, std::span<const double> b,
                            VarianceModel model = VarianceModel::kPooled);

// One test per skill column, computed as (non-STEM - STEM): a negative t means
// the STEM class has the higher mean. Degenerate columns are flagged, not fatal.
std::vector<TTestResult> skill_ttest_map(const Eigen::MatrixXd& states_stem,
                                         const Eigen::MatrixXd& states_nonstem);

struct Projection1D {
  Eigen::VectorXd projections;
  Eigen::VectorXd direction;
  bool ridge_applied = false;
};

// Fisher discriminant direction S_w^{-1} (mean_1 - mean_0) and the projections X w.
Projection1D lda_project_1d(const Eigen::MatrixXd& x, std::span<const int> labels);

struct ClassHistogram {
  std::vector<double> edges;  // bins + 1 equal-width edges over the pooled range
  std::vector<std::size_t> counts_negative;
  std::vector<std::size_t> counts_positive;
};

ClassHistogram class_histograms(const Eigen::VectorXd& values, std::span<const int> labels,
                                std::size_t bins = 30);

// Sum over bins of min(p_negative, p_positive) on class-normalized counts.
double overlap_coefficient(const ClassHistogram& histogram);

// Normalized learning gain of the per-step mean knowledge state. Pre/post are
// the means over the first/last min(window, T) steps; they overlap when T < 2 window.
double nlg(const Eigen::MatrixXd& states, std::size_t window = 10);

struct NlgResult {
  std::vector<double> nlg_stem;
  std::vector<double> nlg_nonstem;
  double mean_stem = 0.0, std_stem = 0.0;
  double mean_nonstem = 0.0, std_nonstem = 0.0;
  double p_pooled = 1.0;  // one-tailed, H1: STEM > non-STEM
  double p_welch = 1.0;
};

NlgResult compare_nlg(std::vector<double> nlg_stem, std::vector<double> nlg_nonstem);

double sample_mean(std::span<const double> v);
double sample_std(std::span<const double> v);  // n - 1 denominator

}  // namespace ktc
