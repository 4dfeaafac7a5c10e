#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lnp/cohort.hpp"
#include "lnp/concepts.hpp"
#include "lnp/featurize.hpp"
#include "lnp/glm.hpp"

namespace lnp {

// ---------------------------------------------------------------------------
// Confusion matrix and derived metrics

struct ConfusionMatrix {
  long tp = 0;
  long fp = 0;
  long tn = 0;
  long fn = 0;

  bool operator==(const ConfusionMatrix&) const = default;

  long total() const { return tp + fp + tn + fn; }
};

inline ConfusionMatrix confusion(const std::vector<bool>& predictions,
                                 const std::vector<bool>& labels) {
  if (predictions.size() != labels.size())
    throw data_error("predictions and labels differ in length");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i] && labels[i]) ++cm.tp;
    else if (predictions[i] && !labels[i]) ++cm.fp;
    else if (!predictions[i] && labels[i]) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

// Undefined cells (0/0) carry no value rather than a silent zero.
struct Metrics {
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> ppv;
  std::optional<double> npv;
  std::optional<double> f_measure;
};

inline std::optional<double> safe_ratio(double num, double den) {
  if (den == 0.0) return std::nullopt;
  return num / den;
}

// F = 2 * precision * recall / (precision + recall)
inline std::optional<double> f_measure(std::optional<double> ppv,
                                       std::optional<double> sensitivity) {
  if (!ppv || !sensitivity) return std::nullopt;
  double den = *ppv + *sensitivity;
  if (den == 0.0) return std::nullopt;
  return 2.0 * (*ppv) * (*sensitivity) / den;
}

inline Metrics metrics(const ConfusionMatrix& cm) {
  Metrics m;
  m.sensitivity = safe_ratio(double(cm.tp), double(cm.tp + cm.fn));
  m.specificity = safe_ratio(double(cm.tn), double(cm.tn + cm.fp));
  m.ppv = safe_ratio(double(cm.tp), double(cm.tp + cm.fp));
  m.npv = safe_ratio(double(cm.tn), double(cm.tn + cm.fn));
  m.f_measure = f_measure(m.ppv, m.sensitivity);
  return m;
}

// Two-decimal presentation used by report rendering; computation elsewhere
// keeps full precision.
inline std::string format_metric(const std::optional<double>& v) {
  if (!v) return "undefined";
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.2f", *v);
  return buf;
}

// ---------------------------------------------------------------------------
// ROC AUC as the Mann-Whitney statistic, midrank tie handling

inline std::optional<double> roc_auc(const std::vector<double>& scores,
                                     const std::vector<bool>& labels) {
  if (scores.size() != labels.size())
    throw data_error("scores and labels differ in length");
  std::size_t n_pos = 0, n_neg = 0;
  for (bool y : labels) (y ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  // sum of midranks over positives
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    double midrank = (double(i + 1) + double(j)) / 2.0;  // 1-based ranks
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) rank_sum_pos += midrank;
    i = j;
  }
  double np = double(n_pos), nn = double(n_neg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

// ---------------------------------------------------------------------------
// Coefficient ranking

// Top-k features by signed coefficient, descending; ties break by name.
inline std::vector<std::pair<std::string, double>> rank_coefficients(
    const Model& model, std::size_t k) {
  if (k < 1) throw config_error("k must be >= 1");
  std::vector<std::pair<std::string, double>> ranked;
  for (std::size_t j = 0; j < model.weights.size(); ++j)
    ranked.emplace_back(model.feature_names[j], model.weights[j]);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

// ---------------------------------------------------------------------------
// Exact Shapley attributions for a linear model

struct AttributionReport {
  double base_value = 0.0;  // logit at the feature means
  std::vector<std::string> patient_ids;
  std::vector<std::string> feature_names;
  std::vector<std::vector<double>> contributions;  // per patient, phi_j
  std::vector<double> mean_abs;                    // ranking statistic
};

// phi_j(x) = w_j * (x_j - mu_j); base + sum(phi) reproduces the logit
// exactly. Means come from the background matrix columns.
inline AttributionReport shap_linear(const Model& model,
                                     const std::vector<double>& means,
                                     const FeatureMatrix& X_explain) {
  if (means.size() != model.weights.size() ||
      X_explain.n_cols() != model.weights.size())
    throw data_error("attribution dimensions do not match model");
  AttributionReport report;
  report.feature_names = model.feature_names;
  report.base_value = model.intercept;
  for (std::size_t j = 0; j < means.size(); ++j)
    report.base_value += model.weights[j] * means[j];
  report.mean_abs.assign(model.weights.size(), 0.0);
  for (std::size_t i = 0; i < X_explain.n_rows(); ++i) {
    auto x = X_explain.dense_row(i);
    std::vector<double> phi(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
      phi[j] = model.weights[j] * (x[j] - means[j]);
      report.mean_abs[j] += std::abs(phi[j]);
    }
    report.patient_ids.push_back(X_explain.patient_ids[i]);
    report.contributions.push_back(std::move(phi));
  }
  if (!X_explain.rows.empty())
    for (auto& v : report.mean_abs)
      v /= static_cast<double>(X_explain.n_rows());
  return report;
}

inline AttributionReport shap_linear(const Model& model,
                                     const FeatureMatrix& X_background,
                                     const FeatureMatrix& X_explain) {
  return shap_linear(model, X_background.column_means(), X_explain);
}

// Uses the training-set means stored on the model.
inline AttributionReport shap_linear(const Model& model,
                                     const FeatureMatrix& X_explain) {
  return shap_linear(model, model.feature_means, X_explain);
}

inline void save_attributions(const AttributionReport& report,
                              const std::string& attributions_path,
                              const std::string& mean_abs_path) {
  std::ofstream attr(attributions_path);
  if (!attr)
    throw data_error("cannot open " + attributions_path + " for writing");
  attr << "patient_id,feature,phi\n";
  for (std::size_t i = 0; i < report.patient_ids.size(); ++i)
    for (std::size_t j = 0; j < report.feature_names.size(); ++j)
      attr << report.patient_ids[i] << ',' << report.feature_names[j] << ','
           << detail::format_double(report.contributions[i][j]) << "\n";

  std::vector<std::size_t> order(report.feature_names.size());
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (report.mean_abs[a] != report.mean_abs[b])
      return report.mean_abs[a] > report.mean_abs[b];
    return report.feature_names[a] < report.feature_names[b];
  });
  std::ofstream mean(mean_abs_path);
  if (!mean) throw data_error("cannot open " + mean_abs_path + " for writing");
  mean << "feature,mean_abs_phi\n";
  for (auto j : order)
    mean << report.feature_names[j] << ','
         << detail::format_double(report.mean_abs[j]) << "\n";
}

// ---------------------------------------------------------------------------
// Evaluation report

struct PatientPrediction {
  std::string patient_id;
  double probability = 0.0;
  bool predicted = false;
  bool actual = false;

  bool operator==(const PatientPrediction&) const = default;
};

struct EvalReport {
  ConfusionMatrix confusion;
  Metrics metrics;
  std::optional<double> auc;
  std::vector<PatientPrediction> per_patient;
  std::vector<std::string> warnings;
};

inline EvalReport evaluate_probabilities(
    const std::vector<std::string>& patient_ids,
    const std::vector<double>& probabilities, const std::vector<bool>& labels,
    double threshold, bool with_auc = true) {
  if (patient_ids.size() != probabilities.size() ||
      labels.size() != probabilities.size())
    throw data_error("evaluation inputs differ in length");
  EvalReport report;
  std::vector<bool> predictions;
  predictions.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    bool pred = probabilities[i] >= threshold;
    predictions.push_back(pred);
    report.per_patient.push_back(
        {patient_ids[i], probabilities[i], pred, labels[i]});
  }
  report.confusion = confusion(predictions, labels);
  report.metrics = metrics(report.confusion);
  if (with_auc) report.auc = roc_auc(probabilities, labels);
  return report;
}

inline json report_to_json(const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? json(*v) : json(nullptr);
  };
  json per_patient = json::array();
  for (const auto& p : r.per_patient)
    per_patient.push_back(json{{"patient_id", p.patient_id},
                               {"probability", p.probability},
                               {"predicted", p.predicted},
                               {"actual", p.actual}});
  return json{{"confusion",
               {{"tp", r.confusion.tp},
                {"fp", r.confusion.fp},
                {"tn", r.confusion.tn},
                {"fn", r.confusion.fn}}},
              {"sensitivity", opt(r.metrics.sensitivity)},
              {"specificity", opt(r.metrics.specificity)},
              {"ppv", opt(r.metrics.ppv)},
              {"npv", opt(r.metrics.npv)},
              {"f_measure", opt(r.metrics.f_measure)},
              {"auc", opt(r.auc)},
              {"per_patient", per_patient},
              {"warnings", r.warnings}};
}

inline void save_report(const EvalReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot open " + path + " for writing");
  out << report_to_json(r).dump(2) << "\n";
}

inline EvalReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open report file " + path);
  json obj;
  try {
    in >> obj;
  } catch (const json::parse_error& e) {
    throw data_error(path + ": " + e.what());
  }
  EvalReport r;
  const auto& cm = obj.at("confusion");
  r.confusion = {cm.at("tp").get<long>(), cm.at("fp").get<long>(),
                 cm.at("tn").get<long>(), cm.at("fn").get<long>()};
  auto opt = [&](const char* key) -> std::optional<double> {
    if (obj.at(key).is_null()) return std::nullopt;
    return obj.at(key).get<double>();
  };
  r.metrics.sensitivity = opt("sensitivity");
  r.metrics.specificity = opt("specificity");
  r.metrics.ppv = opt("ppv");
  r.metrics.npv = opt("npv");
  r.metrics.f_measure = opt("f_measure");
  r.auc = opt("auc");
  for (const auto& p : obj.at("per_patient"))
    r.per_patient.push_back({p.at("patient_id").get<std::string>(),
                             p.at("probability").get<double>(),
                             p.at("predicted").get<bool>(),
                             p.at("actual").get<bool>()});
  if (obj.contains("warnings"))
    r.warnings = obj.at("warnings").get<std::vector<std::string>>();
  return r;
}

// ---------------------------------------------------------------------------
// Per-patient error dossiers

struct FeatureContribution {
  std::string feature;
  double value = 0.0;
  double phi = 0.0;
};

struct MentionSnippet {
  std::string feature;    // CUI or regex concept name
  std::string note_id;
  std::string sentence;   // full sentence context
  std::string matched_text;
  bool negated = false;
};

struct ErrorDossier {
  std::string patient_id;
  double probability = 0.0;
  bool predicted = false;
  bool actual = false;
  std::vector<FeatureContribution> active_features;  // nonzero entries
  std::vector<MentionSnippet> snippets;
};

namespace detail {

// Collects every mention of a model feature in the patient's notes,
// including negated ones so the dossier shows the negation context.
inline std::vector<MentionSnippet> collect_snippets(
    const PatientRecord& patient, const std::vector<std::string>& features,
    const ExtractionConfig& extraction) {
  std::set<std::string> wanted(features.begin(), features.end());
  std::vector<MentionSnippet> snippets;
  ConceptMatcher matcher(extraction.lexicon);
  auto notes = deduplicate_notes(patient.notes);
  for (const auto& note : notes) {
    auto sentences =
        segment_sentences(note.text, note.note_id, extraction.abbreviations);
    for (const auto& sent : sentences) {
      auto pre = find_trigger_hits(sent.tokens,
                                   extraction.negation.pre_triggers);
      auto post = find_trigger_hits(sent.tokens,
                                    extraction.negation.post_triggers);
      for (const auto& m :
           detect_negation(sent, matcher.match(sent), extraction.negation)) {
        if (!wanted.count(m.cui)) continue;
        snippets.push_back(
            {m.cui, note.note_id, sent.text, m.matched_text, m.negated});
      }
      for (const auto& [name, patterns] : extraction.regex_set.compiled) {
        if (!wanted.count(name)) continue;
        for (const auto& re : patterns) {
          for (auto it = std::sregex_iterator(sent.text.begin(),
                                              sent.text.end(), re);
               it != std::sregex_iterator(); ++it) {
            std::size_t m_begin = static_cast<std::size_t>(it->position());
            std::size_t m_end =
                m_begin + static_cast<std::size_t>(it->length());
            std::size_t t_begin = sent.tokens.size(), t_end = 0;
            for (std::size_t t = 0; t < sent.tokens.size(); ++t) {
              if (sent.tokens[t].end > m_begin &&
                  sent.tokens[t].begin < m_end) {
                t_begin = std::min(t_begin, t);
                t_end = std::max(t_end, t + 1);
              }
            }
            if (t_begin >= t_end) continue;
            bool negated = span_negated(
                sent.tokens, t_begin, t_end, pre, post,
                extraction.negation.terminators,
                extraction.negation.scope_window);
            snippets.push_back(
                {name, note.note_id, sent.text, it->str(), negated});
          }
        }
      }
    }
  }
  return snippets;
}

}  // namespace detail

// Dossiers for every misclassified patient: probability, active features
// with their attributions, and (when extraction context is supplied) the
// matched text snippets with sentence context.
inline std::vector<ErrorDossier> error_report(
    const Model& model, const FeatureMatrix& X, const Cohort& cohort,
    double threshold, const ExtractionConfig* extraction = nullptr) {
  std::map<std::string, const PatientRecord*> by_id;
  for (const auto& p : cohort.patients) by_id[p.patient_id] = &p;

  std::vector<ErrorDossier> dossiers;
  for (std::size_t i = 0; i < X.n_rows(); ++i) {
    auto it = by_id.find(X.patient_ids[i]);
    if (it == by_id.end() || !it->second->label.has_value())
      throw data_error("patient " + X.patient_ids[i] +
                       " missing from cohort or unlabeled");
    double z = model.intercept;
    for (const auto& [c, v] : X.rows[i]) z += model.weights[c] * v;
    double prob = sigmoid(z);
    bool predicted = prob >= threshold;
    bool actual = *it->second->label;
    if (predicted == actual) continue;

    ErrorDossier d;
    d.patient_id = X.patient_ids[i];
    d.probability = prob;
    d.predicted = predicted;
    d.actual = actual;
    for (const auto& [c, v] : X.rows[i]) {
      double phi = model.weights[c] * (v - model.feature_means[c]);
      d.active_features.push_back({X.feature_names[c], v, phi});
    }
    // snippets cover every model feature, not just the active ones; a
    // mention suppressed by negation is often the explanation being sought
    if (extraction)
      d.snippets = detail::collect_snippets(*it->second, X.feature_names,
                                            *extraction);
    dossiers.push_back(std::move(d));
  }
  return dossiers;
}

inline json dossiers_to_json(const std::vector<ErrorDossier>& dossiers) {
  json out = json::array();
  for (const auto& d : dossiers) {
    json features = json::array();
    for (const auto& f : d.active_features)
      features.push_back(
          json{{"feature", f.feature}, {"value", f.value}, {"phi", f.phi}});
    json snippets = json::array();
    for (const auto& s : d.snippets)
      snippets.push_back(json{{"feature", s.feature},
                              {"note_id", s.note_id},
                              {"sentence", s.sentence},
                              {"matched_text", s.matched_text},
                              {"negated", s.negated}});
    out.push_back(json{{"patient_id", d.patient_id},
                       {"probability", d.probability},
                       {"predicted", d.predicted},
                       {"actual", d.actual},
                       {"active_features", features},
                       {"snippets", snippets}});
  }
  return out;
}

inline void save_error_report(const std::vector<ErrorDossier>& dossiers,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot open " + path + " for writing");
  out << dossiers_to_json(dossiers).dump(2) << "\n";
}

}  // namespace lnp
