#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "lnp/errors.hpp"
#include "lnp/featurize.hpp"
#include "lnp/jsonl.hpp"
#include "lnp/rng.hpp"

namespace lnp {

// ---------------------------------------------------------------------------
// Numerically stable primitives

// log(1 + exp(t)) without overflow.
inline double log1pexp(double t) {
  if (t > 33.0) return t;
  if (t > 0.0) return t + std::log1p(std::exp(-t));
  return std::log1p(std::exp(t));
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Training configuration

struct SagOptions {
  int max_epochs = 300;
  double tolerance = 1e-8;  // max parameter change per epoch
  std::uint64_t seed = 0;
};

enum class ClassWeight { balanced, uniform };

struct TrainConfig {
  std::vector<double> C_grid = default_c_grid();
  ClassWeight class_weight = ClassWeight::balanced;
  SagOptions optimizer;
  int cv_folds = 5;
  double threshold = 0.5;

  // C = inverse regularization strength, 1e-5 .. 1e5 stepping by 10.
  static std::vector<double> default_c_grid() {
    return {1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1e0, 1e1, 1e2, 1e3, 1e4, 1e5};
  }

  void validate() const {
    if (C_grid.empty()) throw config_error("C grid must be non-empty");
    for (double c : C_grid)
      if (!(c > 0.0)) throw config_error("C grid values must be positive");
    if (!(threshold > 0.0 && threshold < 1.0))
      throw config_error("threshold must be in (0, 1)");
    if (cv_folds < 2) throw config_error("cv_folds must be >= 2");
  }
};

// ---------------------------------------------------------------------------
// Model

struct ModelMetadata {
  std::uint64_t seed = 0;
  bool converged = false;
  std::vector<std::pair<double, double>> cv_accuracy_table;  // (C, accuracy)
  std::string train_fingerprint;
  std::string model_kind;

  bool operator==(const ModelMetadata&) const = default;
};

struct Model {
  std::vector<std::string> feature_names;
  std::vector<double> weights;
  double intercept = 0.0;
  double C = 1.0;
  std::vector<double> feature_means;  // training-set column means
  ModelMetadata metadata;

  bool operator==(const Model&) const = default;
};

// ---------------------------------------------------------------------------
// Class weights: w_c = n / (2 * n_c)

struct ClassWeights {
  double positive = 1.0;
  double negative = 1.0;
};

inline ClassWeights compute_class_weights(const std::vector<int>& labels) {
  std::size_t n_pos = 0, n_neg = 0;
  for (int y : labels) (y ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0)
    throw data_error("both classes must be present to compute class weights");
  double n = static_cast<double>(labels.size());
  return {n / (2.0 * static_cast<double>(n_pos)),
          n / (2.0 * static_cast<double>(n_neg))};
}

inline std::vector<double> sample_weights_for(const std::vector<int>& labels,
                                              ClassWeight mode) {
  std::vector<double> w(labels.size(), 1.0);
  if (mode == ClassWeight::balanced) {
    auto cw = compute_class_weights(labels);
    for (std::size_t i = 0; i < labels.size(); ++i)
      w[i] = labels[i] ? cw.positive : cw.negative;
  }
  return w;
}

// ---------------------------------------------------------------------------
// Objective: 0.5*||w||^2 + C * sum_i s_i * log(1 + exp(-y~_i * (w.x_i + b)))
// with y~ in {-1,+1}; the intercept is not penalized.

struct LossGradient {
  double loss = 0.0;
  std::vector<double> gradient;
  double intercept_gradient = 0.0;
};

inline LossGradient loss_and_gradient(const std::vector<double>& weights,
                                      double intercept,
                                      const FeatureMatrix& X,
                                      const std::vector<int>& y, double C,
                                      const std::vector<double>& sample_weights) {
  if (weights.size() != X.n_cols())
    throw data_error("weight vector length does not match feature count");
  if (y.size() != X.n_rows() || sample_weights.size() != X.n_rows())
    throw data_error("label/sample-weight length does not match row count");
  if (!(C > 0.0)) throw config_error("C must be positive");
  if (!std::isfinite(intercept))
    throw data_error("non-finite intercept");
  for (double w : weights)
    if (!std::isfinite(w)) throw data_error("non-finite weight");
  for (double s : sample_weights)
    if (!std::isfinite(s)) throw data_error("non-finite sample weight");

  LossGradient out;
  out.gradient = weights;  // d/dw of 0.5*||w||^2
  out.loss = 0.5 * std::inner_product(weights.begin(), weights.end(),
                                      weights.begin(), 0.0);
  for (std::size_t i = 0; i < X.n_rows(); ++i) {
    double z = intercept;
    for (const auto& [c, v] : X.rows[i]) z += weights[c] * v;
    double ysign = y[i] ? 1.0 : -1.0;
    double margin = ysign * z;
    out.loss += C * sample_weights[i] * log1pexp(-margin);
    // d/dz of the data term
    double dz = C * sample_weights[i] * (-ysign) * sigmoid(-margin);
    for (const auto& [c, v] : X.rows[i]) out.gradient[c] += dz * v;
    out.intercept_gradient += dz;
  }
  if (!std::isfinite(out.loss)) throw data_error("non-finite loss");
  return out;
}

// ---------------------------------------------------------------------------
// Stochastic average gradient

// Minimizes the objective above, keeping one remembered data-term gradient
// per sample. Step size is 1/L with the conservative Lipschitz bound
// L = 0.25 * max_i(s_i * C * ||x_i||^2) + 1; stopping is by max parameter
// change per epoch. Deterministic for a fixed seed.
inline Model fit_sag(const FeatureMatrix& X, const std::vector<int>& y,
                     double C, const std::vector<double>& sample_weights,
                     const SagOptions& options = {}) {
  const std::size_t n = X.n_rows();
  const std::size_t d = X.n_cols();
  if (y.size() != n || sample_weights.size() != n)
    throw data_error("label/sample-weight length does not match row count");
  {
    bool has_pos = false, has_neg = false;
    for (int v : y) (v ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg)
      throw data_error("both classes must be present for training");
  }
  for (const auto& row : X.rows)
    for (const auto& [c, v] : row)
      if (!std::isfinite(v)) throw data_error("non-finite feature value");

  double max_row_term = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (const auto& [c, v] : X.rows[i]) sq += v * v;
    max_row_term = std::max(max_row_term, sample_weights[i] * C * sq);
  }
  const double step = 1.0 / (0.25 * max_row_term + 1.0);
  const double inv_n = 1.0 / static_cast<double>(n);

  std::vector<double> w(d, 0.0);
  double b = 0.0;

  // gradient memory: remembered d/dz of each sample's data term
  std::vector<double> mem(n);
  std::vector<double> grad_sum(d, 0.0);
  double grad_sum_b = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double ysign = y[i] ? 1.0 : -1.0;
    mem[i] = C * sample_weights[i] * (-ysign) * sigmoid(0.0);
    for (const auto& [c, v] : X.rows[i]) grad_sum[c] += mem[i] * v;
    grad_sum_b += mem[i];
  }

  Rng rng(options.seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  bool converged = false;
  std::vector<double> w_epoch(d);
  for (int epoch = 0; epoch < options.max_epochs && !converged; ++epoch) {
    w_epoch = w;
    double b_epoch = b;
    rng.shuffle(order);
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t i = order[k];
      double z = b;
      for (const auto& [c, v] : X.rows[i]) z += w[c] * v;
      double ysign = y[i] ? 1.0 : -1.0;
      double fresh = C * sample_weights[i] * (-ysign) * sigmoid(-ysign * z);
      double delta = fresh - mem[i];
      mem[i] = fresh;
      for (const auto& [c, v] : X.rows[i]) grad_sum[c] += delta * v;
      grad_sum_b += delta;
      for (std::size_t j = 0; j < d; ++j)
        w[j] -= step * (grad_sum[j] + w[j]) * inv_n;
      b -= step * grad_sum_b * inv_n;
    }
    double change = std::abs(b - b_epoch);
    for (std::size_t j = 0; j < d; ++j)
      change = std::max(change, std::abs(w[j] - w_epoch[j]));
    converged = change < options.tolerance;
  }

  Model model;
  model.feature_names = X.feature_names;
  model.weights = std::move(w);
  model.intercept = b;
  model.C = C;
  model.feature_means = X.column_means();
  model.metadata.seed = options.seed;
  model.metadata.converged = converged;
  model.metadata.model_kind = to_string(X.kind);
  return model;
}

// ---------------------------------------------------------------------------
// Prediction

inline double predict_logit(const Model& model,
                            const std::vector<double>& x) {
  if (x.size() != model.weights.size())
    throw data_error("feature vector length does not match model");
  double z = model.intercept;
  for (std::size_t j = 0; j < x.size(); ++j) z += model.weights[j] * x[j];
  return z;
}

inline double predict_proba(const Model& model, const std::vector<double>& x) {
  return sigmoid(predict_logit(model, x));
}

inline bool classify(const Model& model, const std::vector<double>& x,
                     double threshold = 0.5) {
  return predict_proba(model, x) >= threshold;
}

inline std::vector<double> predict_proba_matrix(const Model& model,
                                                const FeatureMatrix& X) {
  if (X.n_cols() != model.weights.size())
    throw data_error("matrix width does not match model");
  std::vector<double> out;
  out.reserve(X.n_rows());
  for (std::size_t i = 0; i < X.n_rows(); ++i) {
    double z = model.intercept;
    for (const auto& [c, v] : X.rows[i]) z += model.weights[c] * v;
    out.push_back(sigmoid(z));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Grid search over C (stratified k-fold cross-validated accuracy)

struct GridSearchResult {
  double best_C = 1.0;
  std::vector<std::pair<double, double>> accuracy_table;  // (C, accuracy)
};

namespace detail {

// Deals each class's shuffled members round-robin into cv_folds folds.
inline std::vector<int> stratified_fold_assignment(const std::vector<int>& y,
                                                   int cv_folds,
                                                   std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < y.size(); ++i) (y[i] ? pos : neg).push_back(i);
  if (pos.size() < static_cast<std::size_t>(cv_folds) ||
      neg.size() < static_cast<std::size_t>(cv_folds))
    throw data_error("stratification failure: a class has fewer members than "
                     "the number of folds");
  Rng rng(seed);
  rng.shuffle(neg);
  rng.shuffle(pos);
  std::vector<int> fold(y.size(), 0);
  for (std::size_t k = 0; k < neg.size(); ++k)
    fold[neg[k]] = static_cast<int>(k % cv_folds);
  for (std::size_t k = 0; k < pos.size(); ++k)
    fold[pos[k]] = static_cast<int>(k % cv_folds);
  return fold;
}

inline FeatureMatrix take_rows(const FeatureMatrix& X,
                               const std::vector<std::size_t>& idx) {
  FeatureMatrix out;
  out.kind = X.kind;
  out.feature_names = X.feature_names;
  for (auto i : idx) {
    out.patient_ids.push_back(X.patient_ids[i]);
    out.rows.push_back(X.rows[i]);
  }
  return out;
}

}  // namespace detail

// Mean cross-validated accuracy for every C in the grid; best_C is the
// argmax with ties resolved toward the smallest C.
inline GridSearchResult grid_search(const FeatureMatrix& X,
                                    const std::vector<int>& y,
                                    const TrainConfig& config) {
  config.validate();
  auto fold = detail::stratified_fold_assignment(y, config.cv_folds,
                                                 config.optimizer.seed);

  GridSearchResult result;
  bool first = true;
  double best_acc = 0.0;
  for (double C : config.C_grid) {
    double acc_sum = 0.0;
    for (int f = 0; f < config.cv_folds; ++f) {
      std::vector<std::size_t> fit_idx, val_idx;
      for (std::size_t i = 0; i < y.size(); ++i)
        (fold[i] == f ? val_idx : fit_idx).push_back(i);
      auto X_fit = detail::take_rows(X, fit_idx);
      std::vector<int> y_fit;
      y_fit.reserve(fit_idx.size());
      for (auto i : fit_idx) y_fit.push_back(y[i]);
      auto weights = sample_weights_for(y_fit, config.class_weight);
      Model m = fit_sag(X_fit, y_fit, C, weights, config.optimizer);

      std::size_t correct = 0;
      for (auto i : val_idx) {
        double z = m.intercept;
        for (const auto& [c, v] : X.rows[i]) z += m.weights[c] * v;
        bool pred = sigmoid(z) >= config.threshold;
        if (pred == (y[i] != 0)) ++correct;
      }
      acc_sum += static_cast<double>(correct) /
                 static_cast<double>(val_idx.size());
    }
    double acc = acc_sum / config.cv_folds;
    result.accuracy_table.emplace_back(C, acc);
    if (first || acc > best_acc || (acc == best_acc && C < result.best_C)) {
      best_acc = acc;
      result.best_C = C;
      first = false;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Model serialization

inline json model_to_json(const Model& m) {
  json table = json::array();
  for (const auto& [C, acc] : m.metadata.cv_accuracy_table)
    table.push_back(json{{"C", C}, {"accuracy", acc}});
  return json{{"feature_names", m.feature_names},
              {"weights", m.weights},
              {"intercept", m.intercept},
              {"C", m.C},
              {"feature_means", m.feature_means},
              {"metadata",
               {{"seed", m.metadata.seed},
                {"converged", m.metadata.converged},
                {"cv_accuracy_table", table},
                {"train_fingerprint", m.metadata.train_fingerprint},
                {"model_kind", m.metadata.model_kind}}}};
}

inline void save_model(const Model& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot open " + path + " for writing");
  out << model_to_json(m).dump(2) << "\n";
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open model file " + path);
  json obj;
  try {
    in >> obj;
  } catch (const json::parse_error& e) {
    throw data_error(path + ": " + e.what());
  }
  Model m;
  m.feature_names = obj.at("feature_names").get<std::vector<std::string>>();
  m.weights = obj.at("weights").get<std::vector<double>>();
  m.intercept = obj.at("intercept").get<double>();
  m.C = obj.at("C").get<double>();
  m.feature_means = obj.at("feature_means").get<std::vector<double>>();
  if (m.weights.size() != m.feature_names.size() ||
      m.feature_means.size() != m.feature_names.size())
    throw data_error(path + ": weights/means/names lengths disagree");
  const auto& meta = obj.at("metadata");
  m.metadata.seed = meta.at("seed").get<std::uint64_t>();
  m.metadata.converged = meta.at("converged").get<bool>();
  for (const auto& row : meta.at("cv_accuracy_table"))
    m.metadata.cv_accuracy_table.emplace_back(
        row.at("C").get<double>(), row.at("accuracy").get<double>());
  m.metadata.train_fingerprint =
      meta.at("train_fingerprint").get<std::string>();
  m.metadata.model_kind = meta.at("model_kind").get<std::string>();
  return m;
}

// FNV-1a fingerprint of the training inputs, recorded in model metadata.
inline std::string train_fingerprint(const FeatureMatrix& X,
                                     const std::vector<int>& y) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  auto mix_str = [&](const std::string& s) { mix(s.data(), s.size()); };
  for (const auto& s : X.patient_ids) mix_str(s);
  for (const auto& s : X.feature_names) mix_str(s);
  for (const auto& row : X.rows)
    for (const auto& [c, v] : row) {
      mix(&c, sizeof(c));
      mix(&v, sizeof(v));
    }
  for (int label : y) mix(&label, sizeof(label));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace lnp
