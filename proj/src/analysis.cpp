#include "ktcareer/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ktcareer/error.hpp"

namespace ktc {

namespace {

// Continued fraction for the incomplete beta function (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIterations = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw NumericalError("incomplete beta continued fraction did not converge");
}

// P(|T| > |t|) for Student's t.
double two_sided_tail(double t, double df) {
  if (std::isinf(t)) return 0.0;
  return regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

struct Moments {
  double mean;
  double var;  // n - 1 denominator
};

Moments moments(std::span<const double> v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, v.size() > 1 ? ss / static_cast<double>(v.size() - 1) : 0.0};
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw ValidationError("incomplete beta requires a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw ValidationError("incomplete beta requires x in [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                           b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw ValidationError("t distribution requires df > 0");
  const double tail = 0.5 * two_sided_tail(t, df);
  return t > 0.0 ? 1.0 - tail : tail;
}

double sample_mean(std::span<const double> v) { return moments(v).mean; }
double sample_std(std::span<const double> v) { return std::sqrt(moments(v).var); }

TTestResult t_test(std::span<const double> a, std::span<const double> b, VarianceModel model) {
  if (a.size() < 2 || b.size() < 2) throw ValidationError("t-test requires at least 2 samples per group");
  const auto ma = moments(a);
  const auto mb = moments(b);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());

  TTestResult r;
  r.n_a = a.size();
  r.n_b = b.size();
  r.mean_a = ma.mean;
  r.mean_b = mb.mean;
  r.std_a = std::sqrt(ma.var);
  r.std_b = std::sqrt(mb.var);
  const double diff = ma.mean - mb.mean;
  const double pooled_var = ((na - 1.0) * ma.var + (nb - 1.0) * mb.var) / (na + nb - 2.0);

  double se = 0.0;
  if (model == VarianceModel::kPooled) {
    se = std::sqrt(pooled_var * (1.0 / na + 1.0 / nb));
    r.df = na + nb - 2.0;
  } else {
    const double ua = ma.var / na, ub = mb.var / nb;
    se = std::sqrt(ua + ub);
    const double denom = ua * ua / (na - 1.0) + ub * ub / (nb - 1.0);
    r.df = denom > 0.0 ? (ua + ub) * (ua + ub) / denom : na + nb - 2.0;
  }

  if (pooled_var <= 0.0 || se <= 0.0) {
    r.degenerate = true;
    if (diff != 0.0) throw NumericalError("degenerate variance: both samples constant with different means");
    r.t_score = 0.0;
    r.p_value = 1.0;
    r.cohens_d = 0.0;
    return r;
  }
  r.t_score = diff / se;
  r.p_value = std::clamp(two_sided_tail(r.t_score, r.df), 0.0, 1.0);
  r.cohens_d = diff / std::sqrt(pooled_var);
  return r;
}

double one_tailed_mean_test(std::span<const double> a, std::span<const double> b, VarianceModel model) {
  const auto r = t_test(a, b, model);
  if (r.degenerate) return 0.5;
  return 1.0 - student_t_cdf(r.t_score, r.df);
}

std::vector<TTestResult> skill_ttest_map(const Eigen::MatrixXd& stem, const Eigen::MatrixXd& nonstem) {
  if (stem.rows() == 0 || nonstem.rows() == 0) throw ValidationError("skill t-test map needs both groups");
  if (stem.cols() != nonstem.cols()) throw ValidationError("skill t-test map: inconsistent skill counts");
  std::vector<TTestResult> out;
  out.reserve(static_cast<std::size_t>(stem.cols()));
  for (Eigen::Index j = 0; j < stem.cols(); ++j) {
    const Eigen::VectorXd s = stem.col(j);
    const Eigen::VectorXd n = nonstem.col(j);
    try {
      out.push_back(t_test({n.data(), static_cast<std::size_t>(n.size())},
                           {s.data(), static_cast<std::size_t>(s.size())}));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNumerical) throw;
      TTestResult flagged;
      flagged.degenerate = true;
      flagged.n_a = static_cast<std::size_t>(n.size());
      flagged.n_b = static_cast<std::size_t>(s.size());
      flagged.mean_a = n.mean();
      flagged.mean_b = s.mean();
      flagged.t_score = std::numeric_limits<double>::quiet_NaN();
      flagged.p_value = std::numeric_limits<double>::quiet_NaN();
      flagged.cohens_d = std::numeric_limits<double>::quiet_NaN();
      out.push_back(flagged);
    }
  }
  return out;
}

Projection1D lda_project_1d(const Eigen::MatrixXd& x, std::span<const int> labels) {
  if (static_cast<std::size_t>(x.rows()) != labels.size()) throw ValidationError("LDA projection: row/label count mismatch");
  if (!x.allFinite()) throw ValidationError("LDA projection: features must be finite");
  const auto d = x.cols();
  Eigen::VectorXd mean0 = Eigen::VectorXd::Zero(d), mean1 = Eigen::VectorXd::Zero(d);
  double n0 = 0, n1 = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (labels[static_cast<std::size_t>(i)]) {
      mean1 += x.row(i).transpose();
      ++n1;
    } else {
      mean0 += x.row(i).transpose();
      ++n0;
    }
  }
  if (n0 == 0 || n1 == 0) throw ValidationError("LDA projection requires both classes");
  mean0 /= n0;
  mean1 /= n1;
  Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::VectorXd c = x.row(i).transpose() - (labels[static_cast<std::size_t>(i)] ? mean1 : mean0);
    scatter.noalias() += c * c.transpose();
  }
  const double dof = std::max(1.0, n0 + n1 - 2.0);
  scatter /= dof;

  Projection1D out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scatter);
  const double max_ev = eig.eigenvalues().cwiseAbs().maxCoeff();
  if (eig.eigenvalues().minCoeff() <= 1e-12 * std::max(1.0, max_ev)) {
    scatter.diagonal().array() += 1e-6;
    out.ridge_applied = true;
  }
  out.direction = scatter.llt().solve(mean1 - mean0);
  out.projections = x * out.direction;
  return out;
}

ClassHistogram class_histograms(const Eigen::VectorXd& values, std::span<const int> labels, std::size_t bins) {
  if (static_cast<std::size_t>(values.size()) != labels.size() || values.size() == 0) {
    throw ValidationError("histogram: values/labels mismatch");
  }
  if (bins == 0) throw ValidationError("histogram: bins must be positive");
  const double lo = values.minCoeff();
  double hi = values.maxCoeff();
  if (hi <= lo) hi = lo + 1.0;
  ClassHistogram h;
  h.edges.resize(bins + 1);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = lo + width * static_cast<double>(b);
  h.edges.back() = hi;
  h.counts_negative.assign(bins, 0);
  h.counts_positive.assign(bins, 0);
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    auto b = static_cast<std::size_t>((values[i] - lo) / width);
    b = std::min(b, bins - 1);
    (labels[static_cast<std::size_t>(i)] ? h.counts_positive : h.counts_negative)[b]++;
  }
  return h;
}

double overlap_coefficient(const ClassHistogram& h) {
  const double n0 = static_cast<double>(std::accumulate(h.counts_negative.begin(), h.counts_negative.end(), std::size_t{0}));
  const double n1 = static_cast<double>(std::accumulate(h.counts_positive.begin(), h.counts_positive.end(), std::size_t{0}));
  if (n0 == 0 || n1 == 0) throw ValidationError("overlap coefficient needs both classes");
  double overlap = 0.0;
  for (std::size_t b = 0; b < h.counts_negative.size(); ++b) {
    overlap += std::min(static_cast<double>(h.counts_negative[b]) / n0, static_cast<double>(h.counts_positive[b]) / n1);
  }
  return overlap;
}

double nlg(const Eigen::MatrixXd& states, std::size_t window) {
  const auto t = static_cast<std::size_t>(states.rows());
  if (t < 2) throw ValidationError("NLG requires at least 2 time steps");
  if (window == 0) throw ValidationError("NLG window must be positive");
  const Eigen::VectorXd per_step = states.rowwise().mean();
  const auto w = static_cast<Eigen::Index>(std::min(window, t));
  const double pre = per_step.head(w).mean();
  const double post = per_step.tail(w).mean();
  if (!(pre < 1.0)) throw ValidationError("NLG undefined: pre-score is 1");
  return (post - pre) / (1.0 - pre);
}

NlgResult compare_nlg(std::vector<double> nlg_stem, std::vector<double> nlg_nonstem) {
  NlgResult r;
  r.nlg_stem = std::move(nlg_stem);
  r.nlg_nonstem = std::move(nlg_nonstem);
  r.mean_stem = sample_mean(r.nlg_stem);
  r.std_stem = sample_std(r.nlg_stem);
  r.mean_nonstem = sample_mean(r.nlg_nonstem);
  r.std_nonstem = sample_std(r.nlg_nonstem);
  r.p_pooled = one_tailed_mean_test(r.nlg_stem, r.nlg_nonstem, VarianceModel::kPooled);
  r.p_welch = one_tailed_mean_test(r.nlg_stem, r.nlg_nonstem, VarianceModel::kWelch);
  return r;
}

}  // namespace ktc
