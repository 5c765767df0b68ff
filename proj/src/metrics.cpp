#include "ktcareer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ktcareer/error.hpp"

namespace ktc {

namespace {

void check_sizes(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ValidationError(std::string(what) + ": scores and labels differ in length");
  if (a == 0) throw ValidationError(std::string(what) + ": empty input");
}

std::vector<std::size_t> descending_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores.size(), labels.size(), "auc");
  const auto order = descending_order(scores);
  double positives = 0.0, negatives = 0.0;
  for (int l : labels) (l ? positives : negatives) += 1.0;
  if (positives == 0.0 || negatives == 0.0) throw ValidationError("auc undefined: labels contain a single class");

  // Walk tie groups from the top; each negative in a group is outranked by all
  // positives above it and tied with the positives inside it.
  double positives_above = 0.0;
  double credit = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    double group_pos = 0.0, group_neg = 0.0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? group_pos : group_neg) += 1.0;
      ++j;
    }
    credit += group_neg * (positives_above + 0.5 * group_pos);
    positives_above += group_pos;
    i = j;
  }
  return credit / (positives * negatives);
}

double rmse(std::span<const double> probabilities, std::span<const int> labels) {
  check_sizes(probabilities.size(), labels.size(), "rmse");
  double ss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double d = probabilities[i] - labels[i];
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(labels.size()));
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores.size(), labels.size(), "average precision");
  const double positives = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  if (positives == 0.0) throw ValidationError("average precision undefined: no positive labels");
  const auto order = descending_order(scores);
  double tp = 0.0, seen = 0.0, prev_recall = 0.0, ap = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      tp += labels[order[j]] ? 1.0 : 0.0;
      seen += 1.0;
      ++j;
    }
    const double recall = tp / positives;
    ap += (recall - prev_recall) * (tp / seen);
    prev_recall = recall;
    i = j;
  }
  return ap;
}

}  // namespace ktc
