#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "lnp/baseline.hpp"
#include "lnp/cohort.hpp"
#include "lnp/concepts.hpp"
#include "lnp/evalx.hpp"
#include "lnp/featurize.hpp"
#include "lnp/glm.hpp"

namespace lnp {

enum class ModelKind { baseline, metamap_binary, metamap_count, metamap_mixed };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::baseline: return "baseline";
    case ModelKind::metamap_binary: return "binary";
    case ModelKind::metamap_count: return "count";
    default: return "mixed";
  }
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "baseline") return ModelKind::baseline;
  if (s == "binary" || s == "metamap_binary") return ModelKind::metamap_binary;
  if (s == "count" || s == "metamap_count") return ModelKind::metamap_count;
  if (s == "mixed" || s == "metamap_mixed") return ModelKind::metamap_mixed;
  throw config_error("unknown model kind \"" + s + "\"");
}

// A cohort with its extraction artifacts, so several models can be trained
// and compared without re-running the note pipeline.
struct PreparedCohort {
  Cohort cohort;
  std::vector<ConceptProfile> profiles;         // cohort order
  std::map<std::string, bool> baseline_preds;
  std::vector<std::string> warnings;
};

inline PreparedCohort prepare_cohort(Cohort cohort,
                                     const ExtractionConfig& extraction,
                                     const BaselineRuleConfig& baseline_cfg) {
  PreparedCohort out;
  out.baseline_preds =
      baseline_predictions(cohort, baseline_cfg, &out.warnings);
  ConceptMatcher matcher(extraction.lexicon);
  out.profiles.reserve(cohort.patients.size());
  for (const auto& p : cohort.patients)
    out.profiles.push_back(extract_patient_profile(
        p, matcher, extraction.regex_set, extraction.negation,
        out.baseline_preds.at(p.patient_id), extraction.abbreviations));
  out.cohort = std::move(cohort);
  return out;
}

// Feature matrix for a profile subset, with document-frequency selection
// applied to exactly that subset.
inline FeatureMatrix build_matrix(const std::vector<ConceptProfile>& profiles,
                                  ModelKind kind,
                                  const FeaturizerConfig& config) {
  switch (kind) {
    case ModelKind::metamap_binary: return build_binary_matrix(profiles, config);
    case ModelKind::metamap_count: return build_count_matrix(profiles, config);
    case ModelKind::metamap_mixed: return build_mixed_matrix(profiles, config);
    default:
      throw config_error("the baseline algorithm has no feature matrix");
  }
}

struct TrainOutcome {
  Model model;
  GridSearchResult grid;
  EvalReport test_report;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

namespace detail {

inline std::vector<ConceptProfile> profiles_for(
    const PreparedCohort& prepared, const Cohort& subset) {
  std::map<std::string, const ConceptProfile*> by_id;
  for (const auto& p : prepared.profiles) by_id[p.patient_id] = &p;
  std::vector<ConceptProfile> out;
  out.reserve(subset.patients.size());
  for (const auto& p : subset.patients) out.push_back(*by_id.at(p.patient_id));
  return out;
}

inline std::vector<int> labels_for(const Cohort& cohort) {
  std::vector<int> y;
  y.reserve(cohort.patients.size());
  for (const auto& p : cohort.patients) {
    if (!p.label.has_value())
      throw data_error("patient " + p.patient_id + " is unlabeled");
    y.push_back(*p.label ? 1 : 0);
  }
  return y;
}

inline std::vector<bool> to_bool(const std::vector<int>& y) {
  std::vector<bool> out;
  out.reserve(y.size());
  for (int v : y) out.push_back(v != 0);
  return out;
}

}  // namespace detail

// Split, tune C by cross-validation, fit on the training split, evaluate on
// the held-out split. For the baseline kind there is nothing to fit; the
// rule is just scored on the same test split.
inline TrainOutcome run_train(const PreparedCohort& prepared, ModelKind kind,
                              const FeaturizerConfig& featurizer_cfg,
                              const TrainConfig& train_cfg,
                              double train_fraction, bool stratified,
                              std::uint64_t seed) {
  auto split = split_cohort(prepared.cohort, train_fraction, stratified, seed);
  TrainOutcome out;
  for (const auto& p : split.train.patients)
    out.train_ids.push_back(p.patient_id);
  for (const auto& p : split.test.patients)
    out.test_ids.push_back(p.patient_id);

  auto y_test = detail::labels_for(split.test);

  if (kind == ModelKind::baseline) {
    std::vector<double> probs;
    probs.reserve(split.test.patients.size());
    for (const auto& p : split.test.patients)
      probs.push_back(prepared.baseline_preds.at(p.patient_id) ? 1.0 : 0.0);
    out.test_report =
        evaluate_probabilities(out.test_ids, probs, detail::to_bool(y_test),
                               train_cfg.threshold, /*with_auc=*/false);
    out.model.metadata.model_kind = to_string(kind);
    out.model.metadata.seed = seed;
    return out;
  }

  auto train_profiles = detail::profiles_for(prepared, split.train);
  auto test_profiles = detail::profiles_for(prepared, split.test);
  auto X_train = build_matrix(train_profiles, kind, featurizer_cfg);
  auto X_test =
      project_profiles(test_profiles, X_train.feature_names, X_train.kind,
                       featurizer_cfg.structured_feature_name);
  auto y_train = detail::labels_for(split.train);

  TrainConfig cfg = train_cfg;
  cfg.optimizer.seed = seed;
  out.grid = grid_search(X_train, y_train, cfg);

  auto weights = sample_weights_for(y_train, cfg.class_weight);
  out.model = fit_sag(X_train, y_train, out.grid.best_C, weights,
                      cfg.optimizer);
  out.model.metadata.cv_accuracy_table = out.grid.accuracy_table;
  out.model.metadata.train_fingerprint = train_fingerprint(X_train, y_train);
  out.model.metadata.model_kind = to_string(kind);

  auto probs = predict_proba_matrix(out.model, X_test);
  out.test_report = evaluate_probabilities(
      out.test_ids, probs, detail::to_bool(y_test), cfg.threshold);
  return out;
}

// Scores a frozen model on a new site's cohort. Features the site never
// produces are imputed as zero columns, with a warning per feature.
inline EvalReport run_validate(const Model& model,
                               const PreparedCohort& prepared,
                               const FeaturizerConfig& featurizer_cfg,
                               double threshold) {
  EvalReport report;
  auto y = detail::labels_for(prepared.cohort);
  std::vector<std::string> ids;
  for (const auto& p : prepared.cohort.patients) ids.push_back(p.patient_id);

  if (model.metadata.model_kind == "baseline") {
    std::vector<double> probs;
    for (const auto& id : ids)
      probs.push_back(prepared.baseline_preds.at(id) ? 1.0 : 0.0);
    report = evaluate_probabilities(ids, probs, detail::to_bool(y), threshold,
                                    /*with_auc=*/false);
  } else {
    auto kind = matrix_kind_from_string(model.metadata.model_kind);
    auto X = project_profiles(prepared.profiles, model.feature_names, kind,
                              featurizer_cfg.structured_feature_name);
    auto probs = predict_proba_matrix(model, X);
    report =
        evaluate_probabilities(ids, probs, detail::to_bool(y), threshold);
    for (const auto& feature : model.feature_names) {
      if (feature == featurizer_cfg.structured_feature_name) continue;
      if (document_frequency(prepared.profiles, feature) == 0)
        report.warnings.push_back("model feature \"" + feature +
                                  "\" never occurs in this cohort; column "
                                  "imputed as 0");
    }
  }
  report.warnings.insert(report.warnings.end(), prepared.warnings.begin(),
                         prepared.warnings.end());
  return report;
}

}  // namespace lnp
