#include "ktcareer/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "ktcareer/error.hpp"
#include "ktcareer/eval.hpp"
#include "text_io.hpp"

namespace ktc {

namespace {

using Eigen::Index;

inline Index idx(std::size_t v) { return static_cast<Index>(v); }

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + e^z)
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

void check_training_data(const Eigen::MatrixXd& x, std::span<const int> labels) {
  if (static_cast<std::size_t>(x.rows()) != labels.size()) throw ValidationError("fit: row count != label count");
  if (x.rows() == 0 || x.cols() == 0) throw ValidationError("fit: empty training matrix");
  if (!x.allFinite()) throw ValidationError("fit: features must be finite");
  std::size_t pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw ValidationError("fit: labels must be 0 or 1");
    pos += static_cast<std::size_t>(l);
  }
  if (pos == 0 || pos == labels.size()) throw ValidationError("degenerate labels: training data has a single class");
}

// ---------------------------------------------------------------- GBDT

double mean_log_loss(const Eigen::VectorXd& score, std::span<const int> y) {
  double s = 0.0;
  for (Index i = 0; i < score.size(); ++i) s += softplus(score(i)) - y[static_cast<std::size_t>(i)] * score(i);
  return s / static_cast<double>(score.size());
}

// Level-wise regression tree on residuals with Newton leaf values. Features
// are pre-sorted once per fit; each level makes one pass per feature.
class TreeGrower {
 public:
  TreeGrower(const Eigen::MatrixXd& x, const std::vector<std::vector<Index>>& sorted, const GbdtParams& params)
      : x_(x), sorted_(sorted), params_(params) {}

  RegressionTree grow(const Eigen::VectorXd& residual, const Eigen::VectorXd& hessian, Eigen::VectorXd& importances) {
    const auto n = x_.rows();
    RegressionTree tree;
    tree.nodes.push_back({});
    std::vector<int> node_of(static_cast<std::size_t>(n), 0);
    std::vector<int> active = {0};
    std::vector<NodeStats> stats(1);
    for (Index i = 0; i < n; ++i) stats[0].add(residual(i), hessian(i));

    for (std::size_t depth = 0; depth < params_.max_depth && !active.empty(); ++depth) {
      std::vector<SplitCandidate> best(tree.nodes.size());
      std::vector<NodeStats> left(tree.nodes.size());
      std::vector<double> last_value(tree.nodes.size());
      for (Index f = 0; f < x_.cols(); ++f) {
        for (int a : active) {
          left[static_cast<std::size_t>(a)] = {};
          last_value[static_cast<std::size_t>(a)] = -std::numeric_limits<double>::infinity();
        }
        for (Index i : sorted_[static_cast<std::size_t>(f)]) {
          const int node = node_of[static_cast<std::size_t>(i)];
          if (node < 0) continue;
          const auto k = static_cast<std::size_t>(node);
          const double v = x_(i, f);
          auto& l = left[k];
          const auto& total = stats[k];
          if (v > last_value[k] && l.count >= params_.min_leaf && total.count - l.count >= params_.min_leaf) {
            const double rs = total.sum - l.sum;
            const double rn = static_cast<double>(total.count - l.count);
            const double gain = l.sum * l.sum / static_cast<double>(l.count) + rs * rs / rn -
                                total.sum * total.sum / static_cast<double>(total.count);
            if (gain > best[k].gain) best[k] = {gain, static_cast<int>(f), 0.5 * (last_value[k] + v)};
          }
          l.add(residual(i), hessian(i));
          last_value[k] = v;
        }
      }

      std::vector<int> next_active;
      std::vector<int> left_child(tree.nodes.size(), -1), right_child(tree.nodes.size(), -1);
      for (int a : active) {
        const auto k = static_cast<std::size_t>(a);
        if (best[k].feature < 0 || !(best[k].gain > 1e-12)) continue;
        const int left_id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back({});
        tree.nodes.push_back({});
        auto& node = tree.nodes[k];
        node.feature = best[k].feature;
        node.threshold = best[k].threshold;
        node.left = left_id;
        node.right = left_id + 1;
        importances(node.feature) += best[k].gain;
        left_child[k] = node.left;
        right_child[k] = node.right;
        next_active.push_back(tree.nodes[k].left);
        next_active.push_back(tree.nodes[k].right);
      }
      stats.resize(tree.nodes.size());
      for (int c : next_active) stats[static_cast<std::size_t>(c)] = {};
      for (Index i = 0; i < n; ++i) {
        const int node = node_of[static_cast<std::size_t>(i)];
        if (node < 0) continue;
        const auto k = static_cast<std::size_t>(node);
        if (left_child[k] < 0) {
          node_of[static_cast<std::size_t>(i)] = -1 - node;  // settled in leaf `node`
          continue;
        }
        const auto& split = tree.nodes[k];
        const int child = x_(i, split.feature) <= split.threshold ? split.left : split.right;
        node_of[static_cast<std::size_t>(i)] = child;
        stats[static_cast<std::size_t>(child)].add(residual(i), hessian(i));
      }
      active = std::move(next_active);
    }
    stats.resize(tree.nodes.size());
    for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
      if (tree.nodes[k].feature < 0) {
        const auto& s = stats[k];
        tree.nodes[k].value = s.hess_sum > 1e-12 ? s.sum / s.hess_sum : 0.0;
      }
    }
    return tree;
  }

 private:
  struct NodeStats {
    double sum = 0.0;
    double hess_sum = 0.0;
    std::size_t count = 0;
    void add(double g, double h) {
      sum += g;
      hess_sum += h;
      ++count;
    }
  };
  struct SplitCandidate {
    double gain = 0.0;
    int feature = -1;
    double threshold = 0.0;
  };

  const Eigen::MatrixXd& x_;
  const std::vector<std::vector<Index>>& sorted_;
  const GbdtParams& params_;
};

GbdtModel fit_gbdt(const GbdtParams& params, const Eigen::MatrixXd& x, std::span<const int> y) {
  const auto n = x.rows();
  GbdtModel model;
  model.shrinkage = params.shrinkage;
  const double pos = static_cast<double>(std::accumulate(y.begin(), y.end(), 0));
  const double base = pos / static_cast<double>(n);
  model.initial_score = std::log(base / (1.0 - base));
  model.importances = Eigen::VectorXd::Zero(x.cols());

  std::vector<std::vector<Index>> sorted(static_cast<std::size_t>(x.cols()));
  for (Index f = 0; f < x.cols(); ++f) {
    auto& order = sorted[static_cast<std::size_t>(f)];
    order.resize(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return x(a, f) < x(b, f); });
  }

  Eigen::VectorXd score = Eigen::VectorXd::Constant(n, model.initial_score);
  model.stage_losses.push_back(mean_log_loss(score, y));
  Eigen::VectorXd residual(n), hessian(n);
  TreeGrower grower(x, sorted, params);
  for (std::size_t stage = 0; stage < params.trees; ++stage) {
    for (Index i = 0; i < n; ++i) {
      const double p = sigmoid(score(i));
      residual(i) = y[static_cast<std::size_t>(i)] - p;
      hessian(i) = p * (1.0 - p);
    }
    auto tree = grower.grow(residual, hessian, model.importances);
    for (Index i = 0; i < n; ++i) score(i) += params.shrinkage * tree.predict(x.row(i));
    model.trees.push_back(std::move(tree));
    model.stage_losses.push_back(mean_log_loss(score, y));
  }
  const double total = model.importances.sum();
  if (total > 0) model.importances /= total;
  return model;
}

// ---------------------------------------------------------------- LDA

struct ClassMoments {
  Eigen::VectorXd mean0, mean1;
  Eigen::MatrixXd centered;  // within-class centered rows
  double n0 = 0, n1 = 0;
};

ClassMoments class_moments(const Eigen::MatrixXd& x, std::span<const int> y) {
  ClassMoments m;
  m.mean0 = Eigen::VectorXd::Zero(x.cols());
  m.mean1 = Eigen::VectorXd::Zero(x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    if (y[static_cast<std::size_t>(i)]) {
      m.mean1 += x.row(i).transpose();
      ++m.n1;
    } else {
      m.mean0 += x.row(i).transpose();
      ++m.n0;
    }
  }
  m.mean0 /= m.n0;
  m.mean1 /= m.n1;
  m.centered = x;
  for (Index i = 0; i < x.rows(); ++i) {
    m.centered.row(i) -= (y[static_cast<std::size_t>(i)] ? m.mean1 : m.mean0).transpose();
  }
  return m;
}

LinearModel fit_lda(const LdaParams& params, const Eigen::MatrixXd& x, std::span<const int> y,
                    std::vector<std::string>& warnings) {
  const auto m = class_moments(x, y);
  const double n = static_cast<double>(x.rows());
  const Eigen::VectorXd delta = m.mean1 - m.mean0;
  const auto d = x.cols();
  Eigen::VectorXd w;

  // Shared covariance with the maximum-likelihood (1/n) normalization.
  const auto covariance = [&] { return Eigen::MatrixXd((m.centered.transpose() * m.centered) / n); };
  constexpr double kRidge = 1e-6;

  switch (params.solver) {
    case LdaSolver::kSvd: {
      const Eigen::MatrixXd scaled = m.centered / std::sqrt(n);
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(scaled, Eigen::ComputeThinV);
      const auto& s = svd.singularValues();
      const double tol = (s.size() ? s(0) : 0.0) * static_cast<double>(std::max(x.rows(), d)) *
                         std::numeric_limits<double>::epsilon();
      Eigen::VectorXd proj = svd.matrixV().transpose() * delta;
      for (Index k = 0; k < s.size(); ++k) proj(k) = s(k) > tol ? proj(k) / (s(k) * s(k)) : 0.0;
      w = svd.matrixV() * proj;
      break;
    }
    case LdaSolver::kLsqr: {
      Eigen::MatrixXd cov = covariance();
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(cov);
      qr.setThreshold(1e-10);
      if (qr.rank() < d) {
        warnings.push_back("LDA(LSQR): singular pooled covariance, added 1e-6 ridge");
        cov.diagonal().array() += kRidge;
        qr.compute(cov);
      }
      w = qr.solve(delta);
      break;
    }
    case LdaSolver::kEigen: {
      Eigen::MatrixXd cov = covariance();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
      const double max_ev = eig.eigenvalues().cwiseAbs().maxCoeff();
      if (eig.eigenvalues().minCoeff() <= 1e-10 * std::max(max_ev, 1e-300)) {
        warnings.push_back("LDA(EIGEN): singular pooled covariance, added 1e-6 ridge");
        cov.diagonal().array() += kRidge;
        eig.compute(cov);
      }
      const Eigen::MatrixXd& v = eig.eigenvectors();
      w = v * (v.transpose() * delta).cwiseQuotient(eig.eigenvalues());
      break;
    }
  }
  LinearModel model;
  model.coef = w;
  model.intercept = -0.5 * (m.mean0 + m.mean1).dot(w) + std::log(m.n1 / m.n0);
  return model;
}

// ---------------------------------------------------------------- LR

double lr_objective(const LrParams& p, const Eigen::MatrixXd& x, std::span<const int> y, const Eigen::VectorXd& w,
                    double b) {
  const Eigen::VectorXd z = (x * w).array() + b;
  double loss = 0.0;
  for (Index i = 0; i < z.size(); ++i) loss += softplus(z(i)) - y[static_cast<std::size_t>(i)] * z(i);
  const double penalty = p.penalty == Penalty::kL2 ? 0.5 * w.squaredNorm() : w.lpNorm<1>();
  return p.c * loss + penalty;
}

LinearModel fit_lr_l2(const LrParams& p, const Eigen::MatrixXd& x, std::span<const int> y) {
  const auto n = x.rows();
  const auto d = x.cols();
  Eigen::MatrixXd a(n, d + 1);
  a.leftCols(d) = x;
  a.col(d).setOnes();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d + 1);
  Eigen::VectorXd yv(n);
  for (Index i = 0; i < n; ++i) yv(i) = y[static_cast<std::size_t>(i)];
  const auto objective = [&](const Eigen::VectorXd& bt) { return lr_objective(p, x, y, bt.head(d), bt(d)); };

  double f = objective(beta);
  for (std::size_t iter = 0; iter < p.max_iterations; ++iter) {
    const Eigen::VectorXd z = a * beta;
    Eigen::VectorXd prob(n), weight(n);
    for (Index i = 0; i < n; ++i) {
      prob(i) = sigmoid(z(i));
      weight(i) = p.c * prob(i) * (1.0 - prob(i));
    }
    Eigen::VectorXd grad = p.c * (a.transpose() * (prob - yv));
    grad.head(d) += beta.head(d);
    Eigen::MatrixXd hess = a.transpose() * weight.asDiagonal() * a;
    hess.diagonal().head(d).array() += 1.0;
    hess(d, d) += 1e-12;
    const Eigen::VectorXd step = hess.ldlt().solve(-grad);
    double t = 1.0;
    const double slope = grad.dot(step);
    double f_new = objective(beta + step);
    while (f_new > f + 1e-4 * t * slope && t > 1e-12) {
      t *= 0.5;
      f_new = objective(beta + t * step);
    }
    beta += t * step;
    const double change = (t * step).cwiseAbs().maxCoeff();
    f = f_new;
    if (change < p.tolerance) break;
  }
  return {beta.head(d), beta(d)};
}

double soft_threshold(double v, double t) { return v > t ? v - t : (v < -t ? v + t : 0.0); }

// Proximal Newton: cyclic coordinate descent on the local quadratic model,
// then a backtracking step on the true objective.
LinearModel fit_lr_l1(const LrParams& p, const Eigen::MatrixXd& x, std::span<const int> y) {
  const auto n = x.rows();
  const auto d = x.cols();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  double b = 0.0;
  {
    const double pos = static_cast<double>(std::accumulate(y.begin(), y.end(), 0));
    b = std::log(pos / (static_cast<double>(n) - pos));
  }
  double f = lr_objective(p, x, y, w, b);
  Eigen::VectorXd grad_i(n), hess_i(n), r(n), dw(d);
  for (std::size_t iter = 0; iter < p.max_iterations; ++iter) {
    const Eigen::VectorXd z = (x * w).array() + b;
    for (Index i = 0; i < n; ++i) {
      const double pr = sigmoid(z(i));
      grad_i(i) = p.c * (pr - y[static_cast<std::size_t>(i)]);
      hess_i(i) = std::max(p.c * pr * (1.0 - pr), 1e-12 * p.c);
    }
    dw.setZero();
    double db = 0.0;
    r.setZero();  // x dw + db
    const double hbb = hess_i.sum();
    for (std::size_t sweep = 0; sweep < 200; ++sweep) {
      double max_change = 0.0;
      {
        const double g = grad_i.sum() + hess_i.dot(r);
        const double step = -g / hbb;
        db += step;
        r.array() += step;
        max_change = std::max(max_change, std::fabs(step));
      }
      for (Index j = 0; j < d; ++j) {
        const auto col = x.col(j);
        const double hjj = col.cwiseAbs2().dot(hess_i) + 1e-12;
        const double g = col.dot(grad_i) + col.dot(hess_i.cwiseProduct(r));
        const double current = w(j) + dw(j);
        const double updated = soft_threshold(current - g / hjj, 1.0 / hjj);
        const double change = updated - current;
        if (change != 0.0) {
          dw(j) += change;
          r += change * col;
          max_change = std::max(max_change, std::fabs(change));
        }
      }
      if (max_change < 0.1 * p.tolerance) break;
    }
    // Sufficient decrease on the composite objective.
    const double model_decrease = grad_i.dot(r) + (w + dw).lpNorm<1>() - w.lpNorm<1>();
    double t = 1.0;
    double f_new = lr_objective(p, x, y, w + dw, b + db);
    while (f_new > f + 0.01 * t * std::min(model_decrease, 0.0) && t > 1e-12) {
      t *= 0.5;
      f_new = lr_objective(p, x, y, w + t * dw, b + t * db);
    }
    if (f_new > f) break;
    w += t * dw;
    b += t * db;
    f = f_new;
    const double change = std::max(t * dw.cwiseAbs().maxCoeff(), std::fabs(t * db));
    if (change < p.tolerance) break;
  }
  return {w, b};
}

// ---------------------------------------------------------------- SVM

double default_gamma(const Eigen::MatrixXd& x) {
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  return var > 0 ? 1.0 / (static_cast<double>(x.cols()) * var) : 1.0;
}

SvmModel fit_svm_core(const SvmParams& p, double gamma, const Eigen::MatrixXd& x, std::span<const int> y) {
  const Eigen::MatrixXd kernel = rbf_kernel(x, x, gamma);
  const auto sol = solve_svm_dual(kernel, y, p.c, p.tolerance);
  std::vector<Index> support;
  for (Index i = 0; i < sol.alpha.size(); ++i)
    if (sol.alpha(i) > 0.0) support.push_back(i);
  SvmModel m;
  m.gamma = gamma;
  m.rho = sol.rho;
  m.kkt_gap = sol.kkt_gap;
  m.support_vectors.resize(idx(support.size()), x.cols());
  m.dual_coef.resize(idx(support.size()));
  for (std::size_t s = 0; s < support.size(); ++s) {
    m.support_vectors.row(idx(s)) = x.row(support[s]);
    m.dual_coef(idx(s)) = sol.alpha(support[s]) * (y[static_cast<std::size_t>(support[s])] ? 1.0 : -1.0);
  }
  return m;
}

Eigen::VectorXd svm_decision(const SvmModel& m, const Eigen::MatrixXd& x) {
  if (m.support_vectors.rows() == 0) return Eigen::VectorXd::Constant(x.rows(), -m.rho);
  return (rbf_kernel(x, m.support_vectors, m.gamma) * m.dual_coef).array() - m.rho;
}

SvmModel fit_svm(const SvmParams& p, const Eigen::MatrixXd& x, std::span<const int> y) {
  const double gamma = p.gamma.value_or(default_gamma(x));
  std::size_t pos = 0;
  for (int l : y) pos += static_cast<std::size_t>(l);
  const std::size_t minority = std::min(pos, y.size() - pos);
  const std::size_t folds = std::min(p.calibration_folds, minority);

  std::vector<double> decision(y.size());
  if (folds >= 2) {
    const auto fold_of = stratified_kfold(y, folds, p.seed);
    for (std::size_t f = 0; f < folds; ++f) {
      std::vector<Index> tr, te;
      for (std::size_t i = 0; i < y.size(); ++i) (fold_of[i] == f ? te : tr).push_back(idx(i));
      Eigen::MatrixXd xtr = x(tr, Eigen::all);
      std::vector<int> ytr;
      for (auto i : tr) ytr.push_back(y[static_cast<std::size_t>(i)]);
      const auto has_both = std::count(ytr.begin(), ytr.end(), 1) > 0 && std::count(ytr.begin(), ytr.end(), 0) > 0;
      if (!has_both) continue;
      const auto sub = fit_svm_core(p, gamma, xtr, ytr);
      const Eigen::VectorXd dv = svm_decision(sub, x(te, Eigen::all));
      for (std::size_t k = 0; k < te.size(); ++k) decision[static_cast<std::size_t>(te[k])] = dv(idx(k));
    }
  }
  auto model = fit_svm_core(p, gamma, x, y);
  if (folds < 2) {
    const Eigen::VectorXd dv = svm_decision(model, x);
    decision.assign(dv.data(), dv.data() + dv.size());
  }
  std::tie(model.platt_a, model.platt_b) = fit_platt(decision, y);
  return model;
}

// ---------------------------------------------------------------- helpers

}  // namespace

const char* to_string(Family family) {
  switch (family) {
    case Family::kGbdt: return "GBDT";
    case Family::kLda: return "LDA";
    case Family::kLr: return "LR";
    case Family::kSvm: return "SVM";
  }
  return "?";
}

const char* to_string(LdaSolver solver) {
  switch (solver) {
    case LdaSolver::kSvd: return "SVD";
    case LdaSolver::kLsqr: return "LSQR";
    case LdaSolver::kEigen: return "EIGEN";
  }
  return "?";
}

const char* to_string(Penalty penalty) { return penalty == Penalty::kL1 ? "L1" : "L2"; }

Family parse_family(std::string_view text) {
  if (text == "GBDT") return Family::kGbdt;
  if (text == "LDA") return Family::kLda;
  if (text == "LR") return Family::kLr;
  if (text == "SVM" || text == "SVM-RBF") return Family::kSvm;
  throw ValidationError("unknown classifier family '" + std::string(text) + "'");
}

std::string ClassifierSpec::describe() const {
  std::ostringstream os;
  os << to_string(family);
  switch (family) {
    case Family::kGbdt:
      os << "(trees=" << gbdt.trees << " depth=" << gbdt.max_depth << " min_leaf=" << gbdt.min_leaf
         << " shrinkage=" << gbdt.shrinkage << ")";
      break;
    case Family::kLda: os << "(solver=" << to_string(lda.solver) << ")"; break;
    case Family::kLr: os << "(C=" << lr.c << " penalty=" << to_string(lr.penalty) << ")"; break;
    case Family::kSvm:
      os << "(C=" << svm.c << " gamma=";
      if (svm.gamma) os << *svm.gamma; else os << "scale";
      os << ")";
      break;
  }
  return os.str();
}

void ClassifierSpec::validate() const {
  switch (family) {
    case Family::kGbdt:
      if (gbdt.trees < 1) throw ValidationError("GBDT needs at least one tree");
      if (gbdt.max_depth < 1) throw ValidationError("GBDT depth must be >= 1");
      if (gbdt.min_leaf < 1) throw ValidationError("GBDT min leaf must be >= 1");
      if (!(gbdt.shrinkage > 0)) throw ValidationError("GBDT shrinkage must be positive");
      break;
    case Family::kLda: break;
    case Family::kLr:
      if (!(lr.c > 0)) throw ValidationError("LR C must be positive");
      break;
    case Family::kSvm:
      if (!(svm.c > 0)) throw ValidationError("SVM C must be positive");
      if (svm.gamma && !(*svm.gamma > 0)) throw ValidationError("SVM gamma must be positive");
      break;
  }
}

ClassifierSpec ClassifierSpec::gbdt_spec(std::size_t trees, std::size_t depth, std::size_t min_leaf) {
  ClassifierSpec s;
  s.family = Family::kGbdt;
  s.gbdt.trees = trees;
  s.gbdt.max_depth = depth;
  s.gbdt.min_leaf = min_leaf;
  return s;
}

ClassifierSpec ClassifierSpec::lda_spec(LdaSolver solver) {
  ClassifierSpec s;
  s.family = Family::kLda;
  s.lda.solver = solver;
  return s;
}

ClassifierSpec ClassifierSpec::lr_spec(double c, Penalty penalty) {
  ClassifierSpec s;
  s.family = Family::kLr;
  s.lr.c = c;
  s.lr.penalty = penalty;
  return s;
}

ClassifierSpec ClassifierSpec::svm_spec(double c) {
  ClassifierSpec s;
  s.family = Family::kSvm;
  s.svm.c = c;
  return s;
}

double RegressionTree::predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  std::size_t k = 0;
  while (nodes[k].feature >= 0) {
    k = static_cast<std::size_t>(x(nodes[k].feature) <= nodes[k].threshold ? nodes[k].left : nodes[k].right);
  }
  return nodes[k].value;
}

Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double gamma) {
  const Eigen::VectorXd an = a.rowwise().squaredNorm();
  const Eigen::VectorXd bn = b.rowwise().squaredNorm();
  Eigen::MatrixXd k = -2.0 * (a * b.transpose());
  k.colwise() += an;
  k.rowwise() += bn.transpose();
  return (-gamma * k.array().max(0.0)).exp().matrix();
}

SvmDualSolution solve_svm_dual(const Eigen::MatrixXd& kernel, std::span<const int> labels, double c, double tolerance) {
  const auto n = kernel.rows();
  if (kernel.cols() != n || static_cast<std::size_t>(n) != labels.size()) {
    throw ValidationError("SVM: kernel and labels disagree in size");
  }
  Eigen::VectorXd y(n);
  for (Index i = 0; i < n; ++i) y(i) = labels[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
  SvmDualSolution sol;
  sol.alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd grad = Eigen::VectorXd::Constant(n, -1.0);  // Q alpha - e
  auto& alpha = sol.alpha;
  constexpr double kTau = 1e-12;
  const std::size_t max_iter = std::max<std::size_t>(10000000, 100 * static_cast<std::size_t>(n));
  const auto in_up = [&](Index t) { return (y(t) > 0 && alpha(t) < c) || (y(t) < 0 && alpha(t) > 0); };
  const auto in_low = [&](Index t) { return (y(t) > 0 && alpha(t) > 0) || (y(t) < 0 && alpha(t) < c); };

  for (sol.iterations = 0; sol.iterations < max_iter; ++sol.iterations) {
    double gmax = -std::numeric_limits<double>::infinity();
    Index i = -1;
    for (Index t = 0; t < n; ++t) {
      if (in_up(t) && -y(t) * grad(t) >= gmax) {
        gmax = -y(t) * grad(t);
        i = t;
      }
    }
    double gmax2 = -std::numeric_limits<double>::infinity();
    Index j = -1;
    double obj_min = std::numeric_limits<double>::infinity();
    for (Index t = 0; t < n; ++t) {
      if (!in_low(t)) continue;
      gmax2 = std::max(gmax2, y(t) * grad(t));
      const double grad_diff = gmax + y(t) * grad(t);
      if (i >= 0 && grad_diff > 0) {
        double quad = kernel(i, i) + kernel(t, t) - 2.0 * kernel(i, t);
        if (quad <= 0) quad = kTau;
        const double obj = -grad_diff * grad_diff / quad;
        if (obj <= obj_min) {
          obj_min = obj;
          j = t;
        }
      }
    }
    sol.kkt_gap = gmax + gmax2;
    if (i < 0 || j < 0 || gmax + gmax2 < tolerance) break;

    const double old_ai = alpha(i), old_aj = alpha(j);
    if (y(i) != y(j)) {
      double quad = kernel(i, i) + kernel(j, j) - 2.0 * kernel(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (-grad(i) - grad(j)) / quad;
      const double diff = alpha(i) - alpha(j);
      alpha(i) += delta;
      alpha(j) += delta;
      if (diff > 0) {
        if (alpha(j) < 0) { alpha(j) = 0; alpha(i) = diff; }
      } else {
        if (alpha(i) < 0) { alpha(i) = 0; alpha(j) = -diff; }
      }
      if (diff > 0) {
        if (alpha(i) > c) { alpha(i) = c; alpha(j) = c - diff; }
      } else {
        if (alpha(j) > c) { alpha(j) = c; alpha(i) = c + diff; }
      }
    } else {
      double quad = kernel(i, i) + kernel(j, j) - 2.0 * kernel(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (grad(i) - grad(j)) / quad;
      const double sum = alpha(i) + alpha(j);
      alpha(i) -= delta;
      alpha(j) += delta;
      if (sum > c) {
        if (alpha(i) > c) { alpha(i) = c; alpha(j) = sum - c; }
      } else {
        if (alpha(j) < 0) { alpha(j) = 0; alpha(i) = sum; }
      }
      if (sum > c) {
        if (alpha(j) > c) { alpha(j) = c; alpha(i) = sum - c; }
      } else {
        if (alpha(i) < 0) { alpha(i) = 0; alpha(j) = sum; }
      }
    }
    const double dai = alpha(i) - old_ai, daj = alpha(j) - old_aj;
    // Q_ti = y_t y_i K_ti
    grad.array() += (y.array() * (y(i) * dai * kernel.col(i).array() + y(j) * daj * kernel.col(j).array()));
  }

  double ub = std::numeric_limits<double>::infinity(), lb = -std::numeric_limits<double>::infinity();
  double free_sum = 0.0;
  std::size_t n_free = 0;
  for (Index t = 0; t < n; ++t) {
    const double yg = y(t) * grad(t);
    if (alpha(t) >= c) {
      if (y(t) < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (alpha(t) <= 0) {
      if (y(t) > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      free_sum += yg;
      ++n_free;
    }
  }
  sol.rho = n_free > 0 ? free_sum / static_cast<double>(n_free) : 0.5 * (ub + lb);
  return sol;
}

std::pair<double, double> fit_platt(std::span<const double> dec, std::span<const int> labels) {
  const auto n = dec.size();
  double prior1 = 0, prior0 = 0;
  for (int l : labels) (l ? prior1 : prior0) += 1.0;
  constexpr int kMaxIter = 100;
  constexpr double kMinStep = 1e-10, kSigma = 1e-12, kEps = 1e-5;
  const double hi = (prior1 + 1.0) / (prior1 + 2.0);
  const double lo = 1.0 / (prior0 + 2.0);
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = labels[i] ? hi : lo;
  double a = 0.0, b = std::log((prior0 + 1.0) / (prior1 + 1.0));
  const auto objective = [&](double aa, double bb) {
    double f = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double fab = dec[i] * aa + bb;
      f += fab >= 0 ? t[i] * fab + std::log1p(std::exp(-fab)) : (t[i] - 1.0) * fab + std::log1p(std::exp(fab));
    }
    return f;
  };
  double fval = objective(a, b);
  for (int iter = 0; iter < kMaxIter; ++iter) {
    double h11 = kSigma, h22 = kSigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double fab = dec[i] * a + b;
      double p, q;
      if (fab >= 0) {
        p = std::exp(-fab) / (1.0 + std::exp(-fab));
        q = 1.0 / (1.0 + std::exp(-fab));
      } else {
        p = 1.0 / (1.0 + std::exp(fab));
        q = std::exp(fab) / (1.0 + std::exp(fab));
      }
      const double d2 = p * q;
      h11 += dec[i] * dec[i] * d2;
      h22 += d2;
      h21 += dec[i] * d2;
      const double d1 = t[i] - p;
      g1 += dec[i] * d1;
      g2 += d1;
    }
    if (std::fabs(g1) < kEps && std::fabs(g2) < kEps) break;
    const double det = h11 * h22 - h21 * h21;
    const double da = -(h22 * g1 - h21 * g2) / det;
    const double db = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * da + g2 * db;
    double step = 1.0;
    while (step >= kMinStep) {
      const double na = a + step * da, nb = b + step * db;
      const double nf = objective(na, nb);
      if (nf < fval + 0.0001 * step * gd) {
        a = na;
        b = nb;
        fval = nf;
        break;
      }
      step /= 2.0;
    }
    if (step < kMinStep) break;
  }
  return {a, b};
}

TrainedClassifier fit(const ClassifierSpec& spec, const Eigen::MatrixXd& x, std::span<const int> labels,
                      std::vector<std::string> schema) {
  spec.validate();
  check_training_data(x, labels);
  if (!schema.empty() && schema.size() != static_cast<std::size_t>(x.cols())) {
    throw ValidationError("fit: schema length != feature count");
  }
  TrainedClassifier model;
  model.spec_ = spec;
  model.schema_ = std::move(schema);
  Eigen::MatrixXd data;
  const Eigen::MatrixXd* input = &x;
  if (spec.uses_standardization()) {
    model.standardizer_ = Standardizer::fit(x);
    data = model.standardizer_->transform(x);
    input = &data;
  }
  switch (spec.family) {
    case Family::kGbdt: model.model_ = fit_gbdt(spec.gbdt, *input, labels); break;
    case Family::kLda: model.model_ = fit_lda(spec.lda, *input, labels, model.warnings_); break;
    case Family::kLr:
      model.model_ = spec.lr.penalty == Penalty::kL2 ? fit_lr_l2(spec.lr, *input, labels)
                                                     : fit_lr_l1(spec.lr, *input, labels);
      break;
    case Family::kSvm: model.model_ = fit_svm(spec.svm, *input, labels); break;
  }
  return model;
}

TrainedClassifier make_linear_classifier(Family family, Eigen::VectorXd coef, double intercept) {
  if (family != Family::kLr && family != Family::kLda) throw ValidationError("linear model must be LR or LDA");
  TrainedClassifier m;
  m.spec_.family = family;
  m.spec_.standardize = false;
  m.model_ = LinearModel{std::move(coef), intercept};
  return m;
}

TrainedClassifier make_gbdt_classifier(GbdtModel model) {
  TrainedClassifier m;
  m.spec_.family = Family::kGbdt;
  m.spec_.gbdt.trees = model.trees.size();
  m.spec_.standardize = false;
  m.model_ = std::move(model);
  return m;
}

Eigen::VectorXd TrainedClassifier::decision_function(const Eigen::MatrixXd& raw) const {
  Eigen::MatrixXd scaled;
  const Eigen::MatrixXd* x = &raw;
  if (standardizer_) {
    scaled = standardizer_->transform(raw);
    x = &scaled;
  }
  if (const auto* g = gbdt()) {
    if (g->importances.size() && x->cols() != g->importances.size()) throw ValidationError("predict: feature count mismatch");
    Eigen::VectorXd out = Eigen::VectorXd::Constant(x->rows(), g->initial_score);
    for (const auto& tree : g->trees)
      for (Index i = 0; i < x->rows(); ++i) out(i) += g->shrinkage * tree.predict(x->row(i));
    return out;
  }
  if (const auto* l = linear()) {
    if (x->cols() != l->coef.size()) throw ValidationError("predict: feature count mismatch");
    return (*x * l->coef).array() + l->intercept;
  }
  if (const auto* s = svm()) {
    if (s->support_vectors.rows() && x->cols() != s->support_vectors.cols()) {
      throw ValidationError("predict: feature count mismatch");
    }
    return svm_decision(*s, *x);
  }
  throw ValidationError("predict: model is not fitted");
}

Eigen::VectorXd predict_proba(const TrainedClassifier& model, const Eigen::MatrixXd& x) {
  const Eigen::VectorXd dec = model.decision_function(x);
  Eigen::VectorXd out(dec.size());
  if (const auto* s = model.svm()) {
    for (Index i = 0; i < dec.size(); ++i) out(i) = sigmoid(-(s->platt_a * dec(i) + s->platt_b));
  } else {
    for (Index i = 0; i < dec.size(); ++i) out(i) = sigmoid(dec(i));
  }
  return out;
}

Eigen::VectorXd predict_proba(const TrainedClassifier& model, const FeatureMatrix& features) {
  const auto& expected = model.schema();
  if (!expected.empty() && expected != features.schema) {
    std::string missing, extra;
    for (const auto& s : expected)
      if (std::find(features.schema.begin(), features.schema.end(), s) == features.schema.end()) missing += " " + s;
    for (const auto& s : features.schema)
      if (std::find(expected.begin(), expected.end(), s) == expected.end()) extra += " " + s;
    throw ValidationError("schema mismatch: missing [" + missing + " ] unexpected [" + extra +
                          " ] (order must match the training schema)");
  }
  return predict_proba(model, features.values);
}

std::vector<int> predict(const TrainedClassifier& model, const Eigen::MatrixXd& x) {
  const auto p = predict_proba(model, x);
  std::vector<int> out(static_cast<std::size_t>(p.size()));
  for (Index i = 0; i < p.size(); ++i) out[static_cast<std::size_t>(i)] = p(i) > 0.5 ? 1 : 0;
  return out;
}

std::optional<Eigen::VectorXd> coefficients(const TrainedClassifier& model) {
  if (const auto* l = model.linear()) return l->coef;
  if (const auto* g = model.gbdt()) return g->importances;
  return std::nullopt;
}

// ---------------------------------------------------------------- persistence

namespace {

constexpr const char* kClassifierTag = "ktcareer-classifier";
constexpr int kClassifierVersion = 1;

void write_vector(std::ostream& out, const char* key, const Eigen::VectorXd& v) {
  out << key << ' ' << v.size();
  for (Index i = 0; i < v.size(); ++i) out << ' ' << detail::format_exact(v(i));
  out << '\n';
}

Eigen::VectorXd read_vector(std::istream& in, const std::string& expected_key) {
  std::string key;
  Index n = 0;
  in >> key >> n;
  if (key != expected_key || !in || n < 0) throw ValidationError("classifier file: expected '" + expected_key + "'");
  Eigen::VectorXd v(n);
  std::string token;
  for (Index i = 0; i < n; ++i) {
    in >> token;
    const auto d = detail::parse_double(token);
    if (!d) throw ValidationError("classifier file: bad number in '" + expected_key + "'");
    v(i) = *d;
  }
  return v;
}

double read_scalar(std::istream& in, const std::string& expected_key) {
  std::string key, token;
  in >> key >> token;
  const auto d = detail::parse_double(token);
  if (key != expected_key || !d) throw ValidationError("classifier file: expected '" + expected_key + "'");
  return *d;
}

}  // namespace

void save_classifier(const std::filesystem::path& path, const TrainedClassifier& model) {
  auto out = detail::open_output(path);
  const auto& s = model.spec();
  out << kClassifierTag << ' ' << kClassifierVersion << '\n';
  out << "family " << to_string(s.family) << '\n';
  out << "spec " << s.describe() << '\n';
  out << "gbdt " << s.gbdt.trees << ' ' << s.gbdt.max_depth << ' ' << s.gbdt.min_leaf << ' '
      << detail::format_exact(s.gbdt.shrinkage) << '\n';
  out << "lda " << to_string(s.lda.solver) << '\n';
  out << "lr " << detail::format_exact(s.lr.c) << ' ' << to_string(s.lr.penalty) << '\n';
  out << "svm " << detail::format_exact(s.svm.c) << ' ' << (s.svm.gamma ? detail::format_exact(*s.svm.gamma) : "scale")
      << '\n';
  out << "schema " << model.schema().size();
  for (const auto& name : model.schema()) out << ' ' << name;
  out << '\n';
  out << "standardizer " << (model.standardizer() ? 1 : 0) << '\n';
  if (const auto& st = model.standardizer()) {
    write_vector(out, "mean", st->mean());
    write_vector(out, "scale", st->scale());
  }
  if (const auto* l = model.linear()) {
    write_vector(out, "coef", l->coef);
    out << "intercept " << detail::format_exact(l->intercept) << '\n';
  } else if (const auto* g = model.gbdt()) {
    out << "initial_score " << detail::format_exact(g->initial_score) << '\n';
    out << "shrinkage " << detail::format_exact(g->shrinkage) << '\n';
    write_vector(out, "importances", g->importances);
    out << "trees " << g->trees.size() << '\n';
    for (const auto& tree : g->trees) {
      out << "nodes " << tree.nodes.size() << '\n';
      for (const auto& n : tree.nodes) {
        out << n.feature << ' ' << detail::format_exact(n.threshold) << ' ' << n.left << ' ' << n.right << ' '
            << detail::format_exact(n.value) << '\n';
      }
    }
  } else if (const auto* v = model.svm()) {
    out << "gamma " << detail::format_exact(v->gamma) << '\n';
    out << "rho " << detail::format_exact(v->rho) << '\n';
    out << "platt_a " << detail::format_exact(v->platt_a) << '\n';
    out << "platt_b " << detail::format_exact(v->platt_b) << '\n';
    write_vector(out, "dual_coef", v->dual_coef);
    out << "support_vectors " << v->support_vectors.rows() << ' ' << v->support_vectors.cols() << '\n';
    for (Index i = 0; i < v->support_vectors.rows(); ++i) {
      for (Index j = 0; j < v->support_vectors.cols(); ++j) {
        out << (j ? " " : "") << detail::format_exact(v->support_vectors(i, j));
      }
      out << '\n';
    }
  }
  if (!out) throw IoError("failed writing classifier '" + path.string() + "'");
}

TrainedClassifier load_classifier(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::string tag, key, word;
  int version = 0;
  in >> tag >> version;
  if (tag != kClassifierTag) throw ValidationError("'" + path.string() + "' is not a classifier file");
  if (version != kClassifierVersion) throw ValidationError("unsupported classifier version " + std::to_string(version));
  TrainedClassifier m;
  auto& s = m.spec_;
  in >> key >> word;
  s.family = parse_family(word);
  std::getline(in, word);  // rest of family line
  std::getline(in, word);  // human-readable spec line
  std::string tok;
  in >> key >> s.gbdt.trees >> s.gbdt.max_depth >> s.gbdt.min_leaf >> tok;
  s.gbdt.shrinkage = detail::parse_double(tok).value_or(0.1);
  in >> key >> word;
  s.lda.solver = word == "LSQR" ? LdaSolver::kLsqr : (word == "EIGEN" ? LdaSolver::kEigen : LdaSolver::kSvd);
  in >> key >> tok >> word;
  s.lr.c = detail::parse_double(tok).value_or(1.0);
  s.lr.penalty = word == "L1" ? Penalty::kL1 : Penalty::kL2;
  in >> key >> tok >> word;
  s.svm.c = detail::parse_double(tok).value_or(1.0);
  if (word != "scale") s.svm.gamma = detail::parse_double(word);
  std::size_t schema_len = 0;
  in >> key >> schema_len;
  if (key != "schema") throw ValidationError("classifier file: expected schema");
  m.schema_.resize(schema_len);
  for (auto& name : m.schema_) in >> name;
  int has_std = 0;
  in >> key >> has_std;
  s.standardize = has_std != 0;
  if (has_std) {
    const auto mean = read_vector(in, "mean");
    const auto scale = read_vector(in, "scale");
    m.standardizer_ = Standardizer::restore(mean, scale);
  }
  if (!in) throw ValidationError("classifier file: truncated header");
  switch (s.family) {
    case Family::kLr:
    case Family::kLda: {
      LinearModel l;
      l.coef = read_vector(in, "coef");
      l.intercept = read_scalar(in, "intercept");
      m.model_ = std::move(l);
      break;
    }
    case Family::kGbdt: {
      GbdtModel g;
      g.initial_score = read_scalar(in, "initial_score");
      g.shrinkage = read_scalar(in, "shrinkage");
      g.importances = read_vector(in, "importances");
      std::size_t trees = 0;
      in >> key >> trees;
      for (std::size_t t = 0; t < trees; ++t) {
        std::size_t count = 0;
        in >> key >> count;
        RegressionTree tree;
        tree.nodes.resize(count);
        for (auto& n : tree.nodes) {
          std::string th, val;
          in >> n.feature >> th >> n.left >> n.right >> val;
          n.threshold = detail::parse_double(th).value_or(0.0);
          n.value = detail::parse_double(val).value_or(0.0);
        }
        g.trees.push_back(std::move(tree));
      }
      m.model_ = std::move(g);
      break;
    }
    case Family::kSvm: {
      SvmModel v;
      v.gamma = read_scalar(in, "gamma");
      v.rho = read_scalar(in, "rho");
      v.platt_a = read_scalar(in, "platt_a");
      v.platt_b = read_scalar(in, "platt_b");
      v.dual_coef = read_vector(in, "dual_coef");
      Index rows = 0, cols = 0;
      in >> key >> rows >> cols;
      v.support_vectors.resize(rows, cols);
      for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) {
          in >> tok;
          v.support_vectors(i, j) = detail::parse_double(tok).value_or(0.0);
        }
      m.model_ = std::move(v);
      break;
    }
  }
  if (!in) throw ValidationError("classifier file '" + path.string() + "' is truncated");
  return m;
}

}  // namespace ktc
