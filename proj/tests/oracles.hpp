// Straightforward reference implementations used as test oracles.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <vector>

#include <Eigen/Dense>

#include "ktcareer/dkt.hpp"

namespace oracle {

// Pairwise AUC: each (positive, negative) pair scores 1, ties 0.5.
inline double auc(const std::vector<double>& s, const std::vector<int>& y) {
  double credit = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      pairs += 1.0;
      if (s[i] > s[j]) credit += 1.0;
      else if (s[i] == s[j]) credit += 0.5;
    }
  }
  return credit / pairs;
}

// Step-wise AP over every distinct threshold: sum (R_k - R_{k-1}) P_k.
inline double average_precision(const std::vector<double>& s, const std::vector<int>& y) {
  std::set<double, std::greater<>> thresholds(s.begin(), s.end());
  double positives = 0.0;
  for (int l : y) positives += l;
  double ap = 0.0, prev_recall = 0.0;
  for (double th : thresholds) {
    double tp = 0.0, predicted = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= th) {
        predicted += 1.0;
        tp += y[i];
      }
    }
    const double recall = tp / positives;
    ap += (recall - prev_recall) * (tp / predicted);
    prev_recall = recall;
  }
  return ap;
}

inline double rmse(const std::vector<double>& p, const std::vector<int>& y) {
  double ss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) ss += (p[i] - y[i]) * (p[i] - y[i]);
  return std::sqrt(ss / static_cast<double>(p.size()));
}

inline double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Scalar-loop LSTM forward pass reading parameters element by element.
inline Eigen::MatrixXd lstm_forward(const ktc::DktParams& p, const ktc::EncodedSequence& seq) {
  const auto m = static_cast<int>(p.num_skills());
  const auto h = static_cast<int>(p.hidden());
  const auto w = p.gate_weights();
  const auto b = p.gate_bias();
  const auto wo = p.output_weights();
  const auto bo = p.output_bias();
  const int t_len = static_cast<int>(seq.size());
  std::vector<double> hid(h, 0.0), cell(h, 0.0), x(2 * m + h);
  Eigen::MatrixXd y(t_len, m);
  for (int t = 0; t < t_len; ++t) {
    std::fill(x.begin(), x.end(), 0.0);
    x[seq.skills[t]] = 1.0;
    if (seq.correct[t]) x[m + seq.skills[t]] = 1.0;
    for (int k = 0; k < h; ++k) x[2 * m + k] = hid[k];
    std::vector<double> z(4 * h);
    for (int r = 0; r < 4 * h; ++r) {
      double acc = b(r);
      for (int c = 0; c < 2 * m + h; ++c) acc += w(r, c) * x[c];
      z[r] = acc;
    }
    for (int k = 0; k < h; ++k) {
      const double i = sig(z[k]), f = sig(z[h + k]), g = std::tanh(z[2 * h + k]), o = sig(z[3 * h + k]);
      cell[k] = f * cell[k] + i * g;
      hid[k] = o * std::tanh(cell[k]);
    }
    for (int j = 0; j < m; ++j) {
      double acc = bo(j);
      for (int k = 0; k < h; ++k) acc += wo(j, k) * hid[k];
      y(t, j) = sig(acc);
    }
  }
  return y;
}

struct Losses {
  double l = 0, r = 0, w1 = 0, w2 = 0;
};

inline double ce(double p, int a) { return -(a * std::log(p) + (1 - a) * std::log(1.0 - p)); }

// Double loops over students and time steps.
inline Losses losses(const std::vector<Eigen::MatrixXd>& ys, const std::vector<ktc::EncodedSequence>& seqs) {
  Losses out;
  double n = 0.0;
  const double m = static_cast<double>(ys.front().cols());
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const auto& y = ys[i];
    const auto& s = seqs[i];
    for (std::size_t t = 0; t + 1 < s.size(); ++t) {
      out.l += ce(y(t, s.skills[t + 1]), s.correct[t + 1]);
      out.r += ce(y(t, s.skills[t]), s.correct[t]);
      for (int j = 0; j < y.cols(); ++j) {
        const double d = y(t + 1, j) - y(t, j);
        out.w1 += std::fabs(d);
        out.w2 += d * d;
      }
      n += 1.0;
    }
  }
  out.l /= n;
  out.r /= n;
  out.w1 /= m * n;
  out.w2 /= m * n;
  return out;
}

inline ktc::EncodedSequence random_sequence(std::mt19937_64& rng, std::size_t length, std::size_t m) {
  std::uniform_int_distribution<std::size_t> skill(0, m - 1);
  std::bernoulli_distribution coin(0.5);
  ktc::EncodedSequence s;
  for (std::size_t t = 0; t < length; ++t) {
    s.skills.push_back(skill(rng));
    s.correct.push_back(coin(rng) ? 1 : 0);
  }
  return s;
}

// Central differences of L' computed through the (dropout-free) forward pass.
inline Eigen::VectorXd numeric_gradient(const ktc::DktParams& params, const std::vector<ktc::EncodedSequence>& seqs,
                                        const ktc::RegularizerWeights& w, double eps) {
  ktc::DktParams p = params;
  const auto objective = [&] {
    std::vector<Eigen::MatrixXd> ys;
    for (const auto& s : seqs) ys.push_back(lstm_forward(p, s));
    const auto o = losses(ys, seqs);
    return o.l + w.lambda_r * o.r + w.lambda_w1 * o.w1 + w.lambda_w2 * o.w2;
  };
  Eigen::VectorXd g(p.values().size());
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    const double orig = p.values()(k);
    p.values()(k) = orig + eps;
    const double fp = objective();
    p.values()(k) = orig - eps;
    const double fm = objective();
    p.values()(k) = orig;
    g(k) = (fp - fm) / (2.0 * eps);
  }
  return g;
}

inline double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& n) {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    const double denom = std::max({std::fabs(a(k)), std::fabs(n(k)), 1e-6});
    worst = std::max(worst, std::fabs(a(k) - n(k)) / denom);
  }
  return worst;
}

}  // namespace oracle
