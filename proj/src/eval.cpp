#include "ktcareer/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "ktcareer/error.hpp"
#include "text_io.hpp"

namespace ktc {

namespace {

using Eigen::Index;

struct Split {
  std::vector<Index> train, test;
};

Split split_fold(std::span<const std::size_t> folds, std::size_t fold) {
  Split s;
  for (std::size_t i = 0; i < folds.size(); ++i) (folds[i] == fold ? s.test : s.train).push_back(static_cast<Index>(i));
  return s;
}

std::vector<int> gather(std::span<const int> labels, const std::vector<Index>& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(labels[static_cast<std::size_t>(r)]);
  return out;
}

MetricSummary summarize_folds(const std::vector<FoldMetrics>& folds) {
  std::vector<double> ap, auc_v, rmse_v, comb;
  for (const auto& f : folds) {
    ap.push_back(f.ap);
    auc_v.push_back(f.auc);
    rmse_v.push_back(f.rmse);
    comb.push_back(f.combined);
  }
  return {summarize(ap), summarize(auc_v), summarize(rmse_v), summarize(comb)};
}

void check_inputs(const Eigen::MatrixXd& x, std::span<const int> labels, std::size_t k) {
  if (static_cast<std::size_t>(x.rows()) != labels.size()) throw ValidationError("row count != label count");
  if (k < 2) throw ValidationError("k must be at least 2");
}

}  // namespace

std::vector<std::size_t> stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("k must be at least 2");
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ValidationError("labels must be 0 or 1");
    by_class[labels[i]].push_back(i);
  }
  if (by_class[0].size() < k || by_class[1].size() < k) {
    throw ValidationError("each class needs at least k=" + std::to_string(k) + " samples for stratified folds");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> fold(labels.size());
  std::size_t next = 0;
  // The majority class is dealt first; the minority continues where it stopped,
  // which keeps total fold sizes within one of each other.
  const int first = by_class[0].size() >= by_class[1].size() ? 0 : 1;
  for (int c : {first, 1 - first}) {
    auto& idx = by_class[c];
    std::shuffle(idx.begin(), idx.end(), rng);
    for (auto i : idx) {
      fold[i] = next;
      next = (next + 1) % k;
    }
  }
  return fold;
}

FoldMetrics score_predictions(std::span<const double> p, std::span<const int> labels) {
  FoldMetrics m;
  m.ap = average_precision(p, labels);
  m.auc = auc(p, labels);
  m.rmse = rmse(p, labels);
  m.combined = combined_score(m.auc, m.rmse);
  return m;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(values.size()));
  return s;
}

CvResult cross_validate(const ClassifierSpec& spec, const Eigen::MatrixXd& x, std::span<const int> labels,
                        std::span<const std::size_t> folds, std::size_t k) {
  check_inputs(x, labels, k);
  if (folds.size() != labels.size()) throw ValidationError("fold assignment length != label count");
  CvResult r;
  r.spec = spec;
  for (std::size_t f = 0; f < k; ++f) {
    const auto s = split_fold(folds, f);
    if (s.test.empty()) throw ValidationError("fold " + std::to_string(f) + " is empty");
    const Eigen::MatrixXd xtr = x(s.train, Eigen::all);
    const Eigen::MatrixXd xte = x(s.test, Eigen::all);
    const auto ytr = gather(labels, s.train);
    const auto yte = gather(labels, s.test);
    const auto model = fit(spec, xtr, ytr);
    const Eigen::VectorXd ptr = predict_proba(model, xtr);
    const Eigen::VectorXd pte = predict_proba(model, xte);
    r.train_folds.push_back(score_predictions({ptr.data(), static_cast<std::size_t>(ptr.size())}, ytr));
    r.test_folds.push_back(score_predictions({pte.data(), static_cast<std::size_t>(pte.size())}, yte));
  }
  r.train = summarize_folds(r.train_folds);
  r.test = summarize_folds(r.test_folds);
  return r;
}

std::vector<ClassifierSpec> default_grid(Family family) {
  std::vector<ClassifierSpec> grid;
  const double cs[] = {0.001, 0.01, 0.1, 1.0, 10.0, 100.0};
  switch (family) {
    case Family::kGbdt:
      for (std::size_t trees : {10, 25, 50, 120, 300})
        for (std::size_t depth : {2, 3, 5, 8})
          for (std::size_t leaf : {1, 2, 5, 10}) grid.push_back(ClassifierSpec::gbdt_spec(trees, depth, leaf));
      break;
    case Family::kLda:
      for (auto s : {LdaSolver::kSvd, LdaSolver::kLsqr, LdaSolver::kEigen}) grid.push_back(ClassifierSpec::lda_spec(s));
      break;
    case Family::kLr:
      for (double c : cs)
        for (auto p : {Penalty::kL1, Penalty::kL2}) grid.push_back(ClassifierSpec::lr_spec(c, p));
      break;
    case Family::kSvm:
      for (double c : cs) grid.push_back(ClassifierSpec::svm_spec(c));
      break;
  }
  return grid;
}

GridSearchResult grid_search(std::span<const ClassifierSpec> grid, const Eigen::MatrixXd& x,
                             std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  check_inputs(x, labels, k);
  if (grid.empty()) throw ValidationError("grid search: empty grid");
  const auto folds = stratified_kfold(labels, k, seed);
  GridSearchResult g;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    g.results.push_back(cross_validate(grid[i], x, labels, folds, k));
    if (i == 0 || g.results[i].test.combined.mean > g.results[g.best_index].test.combined.mean) g.best_index = i;
  }
  g.best = grid[g.best_index];
  return g;
}

NestedCvResult nested_cross_validate(std::span<const ClassifierSpec> grid, const Eigen::MatrixXd& x,
                                     std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  check_inputs(x, labels, k);
  const auto outer = stratified_kfold(labels, k, seed);
  NestedCvResult r;
  std::vector<FoldMetrics> test;
  for (std::size_t f = 0; f < k; ++f) {
    const auto s = split_fold(outer, f);
    const Eigen::MatrixXd xtr = x(s.train, Eigen::all);
    const Eigen::MatrixXd xte = x(s.test, Eigen::all);
    const auto ytr = gather(labels, s.train);
    const auto yte = gather(labels, s.test);
    const auto inner = grid_search(grid, xtr, ytr, k, seed + 1 + f);
    r.chosen_index.push_back(inner.best_index);
    const auto model = fit(inner.best, xtr, ytr);
    const Eigen::VectorXd p = predict_proba(model, xte);
    test.push_back(score_predictions({p.data(), static_cast<std::size_t>(p.size())}, yte));
  }
  r.test = summarize_folds(test);
  return r;
}

RfeResult rfe(const ClassifierSpec& spec, const Eigen::MatrixXd& x, std::span<const int> labels,
              std::vector<std::size_t> target_sizes, std::size_t k, std::uint64_t seed) {
  check_inputs(x, labels, k);
  if (spec.family == Family::kSvm) throw UnsupportedError("RFE needs coefficients or importances; SVM-RBF has neither");
  const auto d = static_cast<std::size_t>(x.cols());
  std::vector<std::size_t> sizes;
  for (auto s : target_sizes)
    if (s >= 1 && s <= d) sizes.push_back(s);
  sizes.push_back(d);
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());

  const auto folds = stratified_kfold(labels, k, seed);
  RfeResult r;
  std::vector<std::size_t> retained(d);
  std::iota(retained.begin(), retained.end(), std::size_t{0});
  const auto record = [&] {
    if (!std::binary_search(sizes.begin(), sizes.end(), retained.size())) return;
    std::vector<Index> cols(retained.begin(), retained.end());
    const Eigen::MatrixXd sub = x(Eigen::all, cols);
    r.subsets[retained.size()] = retained;
    r.cv_combined[retained.size()] = cross_validate(spec, sub, labels, folds, k).test.combined.mean;
  };
  record();
  while (retained.size() > sizes.front()) {
    std::vector<Index> cols(retained.begin(), retained.end());
    const Eigen::MatrixXd sub = x(Eigen::all, cols);
    const auto model = fit(spec, sub, labels);
    const auto weights = coefficients(model);
    if (!weights) throw UnsupportedError("RFE: model exposes no coefficients");
    Index drop = 0;
    double smallest = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < weights->size(); ++j) {
      if (std::fabs((*weights)(j)) < smallest) {
        smallest = std::fabs((*weights)(j));
        drop = j;
      }
    }
    r.elimination_order.push_back(retained[static_cast<std::size_t>(drop)]);
    retained.erase(retained.begin() + drop);
    record();
  }
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& [size, score] : r.cv_combined) {
    if (score > best) {
      best = score;
      r.best_size = size;
    }
  }
  return r;
}

std::vector<std::size_t> default_rfe_sizes() { return {5, 8, 10, 12, 15, 20}; }

void write_eval_report(std::ostream& out, std::span<const EvalRow> rows) {
  out << "Model,Features,Split,AP,AP_std,AUC,AUC_std,RMSE,RMSE_std,Combined,Combined_std,"
         "Standardized,NestedCombined,NestedCombined_std,Spec,SelectedFeatures\n";
  const auto fixed = [](double v) { return detail::format_fixed(v, 6); };
  for (const auto& row : rows) {
    std::string selected;
    for (std::size_t i = 0; i < row.selected_features.size(); ++i) selected += (i ? ";" : "") + row.selected_features[i];
    for (const auto* split : {"train", "test"}) {
      const auto& m = std::string(split) == "train" ? row.train : row.test;
      out << row.model << ',' << row.features << ',' << split << ',' << fixed(m.ap.mean) << ',' << fixed(m.ap.std)
          << ',' << fixed(m.auc.mean) << ',' << fixed(m.auc.std) << ',' << fixed(m.rmse.mean) << ','
          << fixed(m.rmse.std) << ',' << fixed(m.combined.mean) << ',' << fixed(m.combined.std) << ','
          << (row.standardized ? "yes" : "no") << ',';
      if (row.nested_combined && std::string(split) == "test") {
        out << fixed(row.nested_combined->mean) << ',' << fixed(row.nested_combined->std);
      } else {
        out << ',';
      }
      out << ",\"" << row.spec << "\"," << selected << '\n';
    }
  }
}

}  // namespace ktc
