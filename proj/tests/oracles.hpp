#pragma once

// Independent reference implementations used only by tests. Everything here
// recomputes results from first principles (dense arithmetic, pair counting,
// full-batch descent) so it shares no code path with the library.

#include <cmath>
#include <cstdint>
#include <vector>

#include "lnp/featurize.hpp"
#include "lnp/rng.hpp"

namespace oracle {

struct DenseInstance {
  std::vector<std::vector<double>> X;  // n x d
  std::vector<int> y;                  // 0/1
  std::vector<double> sample_weights;
  double C = 1.0;

  std::size_t n() const { return X.size(); }
  std::size_t d() const { return X.empty() ? 0 : X[0].size(); }
};

// Random instance with a mix of binary and small-count columns and random
// sample weights; both classes always present.
inline DenseInstance random_instance(lnp::Rng& rng, std::size_t max_n,
                                     std::size_t max_d) {
  DenseInstance inst;
  std::size_t n = 2 + rng.uniform_int(max_n - 1);
  std::size_t d = 1 + rng.uniform_int(max_d);
  std::vector<bool> is_count(d);
  for (std::size_t j = 0; j < d; ++j) is_count[j] = rng.bernoulli(0.5);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(d);
    for (std::size_t j = 0; j < d; ++j)
      row[j] = is_count[j] ? double(rng.uniform_int(6))
                           : (rng.bernoulli(0.5) ? 1.0 : 0.0);
    inst.X.push_back(std::move(row));
    inst.y.push_back(i == 0 ? 1 : (i == 1 ? 0 : rng.bernoulli(0.5) ? 1 : 0));
    inst.sample_weights.push_back(rng.uniform_range(0.25, 2.0));
  }
  const double c_choices[] = {0.05, 0.5, 1.0, 5.0};
  inst.C = c_choices[rng.uniform_int(4)];
  return inst;
}

inline lnp::FeatureMatrix to_matrix(const DenseInstance& inst) {
  lnp::FeatureMatrix m;
  m.kind = lnp::MatrixKind::count;
  for (std::size_t j = 0; j < inst.d(); ++j)
    m.feature_names.push_back("f" + std::to_string(j));
  for (std::size_t i = 0; i < inst.n(); ++i) {
    m.patient_ids.push_back("p" + std::to_string(i));
    std::vector<std::pair<std::size_t, double>> row;
    for (std::size_t j = 0; j < inst.d(); ++j)
      if (inst.X[i][j] != 0.0) row.emplace_back(j, inst.X[i][j]);
    m.rows.push_back(std::move(row));
  }
  return m;
}

// 0.5*||w||^2 + C * sum_i s_i * log(1 + exp(-y~_i (w.x_i + b))), computed
// from scratch with its own stable log-sum.
inline double objective(const DenseInstance& inst,
                        const std::vector<double>& w, double b) {
  double loss = 0.0;
  for (double wj : w) loss += 0.5 * wj * wj;
  for (std::size_t i = 0; i < inst.n(); ++i) {
    double z = b;
    for (std::size_t j = 0; j < inst.d(); ++j) z += w[j] * inst.X[i][j];
    double margin = (inst.y[i] ? 1.0 : -1.0) * z;
    double term = margin > 0.0 ? std::log1p(std::exp(-margin))
                               : -margin + std::log1p(std::exp(margin));
    loss += inst.C * inst.sample_weights[i] * term;
  }
  return loss;
}

// Full-batch gradient of the same objective.
inline void gradient(const DenseInstance& inst, const std::vector<double>& w,
                     double b, std::vector<double>& gw, double& gb) {
  gw = w;
  gb = 0.0;
  for (std::size_t i = 0; i < inst.n(); ++i) {
    double z = b;
    for (std::size_t j = 0; j < inst.d(); ++j) z += w[j] * inst.X[i][j];
    double ysign = inst.y[i] ? 1.0 : -1.0;
    double m = ysign * z;
    double sig = m >= 0.0 ? std::exp(-m) / (1.0 + std::exp(-m))
                          : 1.0 / (1.0 + std::exp(m));
    double dz = inst.C * inst.sample_weights[i] * (-ysign) * sig;
    for (std::size_t j = 0; j < inst.d(); ++j) gw[j] += dz * inst.X[i][j];
    gb += dz;
  }
}

// Full-batch gradient descent with backtracking line search, run to a tight
// gradient norm. This is the convergence oracle for the stochastic solver.
inline double fit_full_batch(const DenseInstance& inst,
                             std::vector<double>* w_out = nullptr,
                             double* b_out = nullptr) {
  std::vector<double> w(inst.d(), 0.0), gw;
  double b = 0.0, gb = 0.0;
  double step = 1.0;
  for (int iter = 0; iter < 100000; ++iter) {
    gradient(inst, w, b, gw, gb);
    double gnorm2 = gb * gb;
    for (double g : gw) gnorm2 += g * g;
    if (gnorm2 < 1e-24) break;
    double f0 = objective(inst, w, b);
    step *= 2.0;  // allow recovery after conservative shrinks
    std::vector<double> w_try(w.size());
    double b_try = 0.0;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t j = 0; j < w.size(); ++j)
        w_try[j] = w[j] - step * gw[j];
      b_try = b - step * gb;
      if (objective(inst, w_try, b_try) <= f0 - 0.5 * step * gnorm2) break;
      step *= 0.5;
    }
    w = w_try;
    b = b_try;
  }
  if (w_out) *w_out = w;
  if (b_out) *b_out = b;
  return objective(inst, w, b);
}

// Central finite differences of the library objective's own loss value is
// not used here; tests difference the *oracle* objective when they need an
// independent slope, and difference the library loss when they probe the
// library gradient.

// AUC by exhaustive pair counting: wins + half-credit ties.
inline double auc_pairs(const std::vector<double>& scores,
                        const std::vector<bool>& labels) {
  double wins = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / double(pairs);
}

}  // namespace oracle
