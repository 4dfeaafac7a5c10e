// lnp: command-line driver for the lupus-nephritis phenotyping pipeline.
//
// Subcommands: synth, extract, featurize, baseline, train, validate,
// explain, report. Exit codes: 0 success, 2 configuration error, 3 data
// error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lnp/cohort.hpp"
#include "lnp/defaults.hpp"
#include "lnp/evalx.hpp"
#include "lnp/featurize.hpp"
#include "lnp/glm.hpp"
#include "lnp/pipeline.hpp"
#include "lnp/synthetic.hpp"

namespace fs = std::filesystem;

namespace {

struct ConfigPaths {
  std::string lexicon;
  std::string regex;
  std::string negation;
  std::string baseline;
  std::string abbreviations;
};

// --config FILE may bundle the individual config paths; explicit flags win.
void apply_run_config(const std::string& path, ConfigPaths& paths) {
  if (path.empty()) return;
  std::ifstream in(path);
  if (!in) throw lnp::config_error("cannot open run config " + path);
  lnp::json obj;
  try {
    in >> obj;
  } catch (const lnp::json::parse_error& e) {
    throw lnp::config_error(path + ": " + e.what());
  }
  auto fill = [&](const char* key, std::string& slot) {
    if (slot.empty() && obj.contains(key))
      slot = obj.at(key).get<std::string>();
  };
  fill("lexicon", paths.lexicon);
  fill("regex", paths.regex);
  fill("negation", paths.negation);
  fill("baseline", paths.baseline);
  fill("abbreviations", paths.abbreviations);
}

lnp::ExtractionConfig load_extraction(const ConfigPaths& paths) {
  lnp::ExtractionConfig cfg;
  cfg.lexicon = paths.lexicon.empty() ? lnp::defaults::lexicon()
                                      : lnp::load_lexicon(paths.lexicon);
  cfg.regex_set = paths.regex.empty() ? lnp::defaults::regex_concepts()
                                      : lnp::load_regex_concepts(paths.regex);
  cfg.negation = paths.negation.empty()
                     ? lnp::defaults::negation()
                     : lnp::load_negation_config(paths.negation);
  if (!paths.abbreviations.empty())
    cfg.abbreviations = lnp::load_abbreviations(paths.abbreviations);
  return cfg;
}

lnp::BaselineRuleConfig load_baseline(const ConfigPaths& paths) {
  return paths.baseline.empty() ? lnp::defaults::baseline_rule()
                                : lnp::load_baseline_config(paths.baseline);
}

std::string join(const std::string& dir, const char* name) {
  return (fs::path(dir) / name).string();
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw lnp::data_error("cannot create output directory " + dir);
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void cmd_synth(const SynthArgs& args) {
  lnp::SyntheticConfig cfg = args.config.empty()
                                 ? lnp::default_synthetic_config()
                                 : lnp::load_synthetic_config(args.config);
  if (args.seed) cfg.seed = *args.seed;
  ensure_out_dir(args.out);
  auto cohort = lnp::generate_synthetic_cohort(cfg);
  lnp::save_cohort(cohort, join(args.out, "notes.jsonl"),
                   join(args.out, "labs.jsonl"), join(args.out, "codes.jsonl"),
                   join(args.out, "labels.jsonl"),
                   join(args.out, "encounters.jsonl"));
  std::cout << "wrote cohort of " << cohort.patients.size() << " patients to "
            << args.out << "\n";
}

// ---------------------------------------------------------------------------

struct CohortArgs {
  std::string notes;
  std::string labs;
  std::string codes;
  std::string labels;
  std::string encounters;
  int min_encounters = 0;
};

lnp::Cohort load_cohort_args(const CohortArgs& args) {
  auto cohort = lnp::load_cohort(args.notes, args.labs, args.codes,
                                 args.labels, args.encounters);
  if (args.min_encounters > 0)
    cohort = lnp::filter_min_encounters(cohort, args.min_encounters);
  return cohort;
}

struct ExtractArgs {
  CohortArgs cohort;
  ConfigPaths configs;
  std::string run_config;
  std::string out;
};

void cmd_extract(const ExtractArgs& args) {
  ConfigPaths paths = args.configs;
  apply_run_config(args.run_config, paths);
  auto extraction = load_extraction(paths);
  auto baseline_cfg = load_baseline(paths);
  ensure_out_dir(args.out);
  auto prepared = lnp::prepare_cohort(load_cohort_args(args.cohort),
                                      extraction, baseline_cfg);
  lnp::save_profiles(prepared.profiles, join(args.out, "profiles.jsonl"));
  for (const auto& w : prepared.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "wrote " << prepared.profiles.size() << " profiles to "
            << join(args.out, "profiles.jsonl") << "\n";
}

// ---------------------------------------------------------------------------

struct FeaturizeArgs {
  std::string profiles;
  std::string model = "mixed";
  std::string out;
  std::optional<int> min_doc_freq_binary;
  std::optional<int> min_doc_freq_count;
};

void cmd_featurize(const FeaturizeArgs& args) {
  auto kind = lnp::model_kind_from_string(args.model);
  if (kind == lnp::ModelKind::baseline)
    throw lnp::config_error("featurize needs an NLP model kind");
  auto profiles = lnp::load_profiles(args.profiles);
  auto cfg = lnp::defaults::featurizer();
  if (args.min_doc_freq_binary) cfg.min_doc_freq_binary = *args.min_doc_freq_binary;
  if (args.min_doc_freq_count) cfg.min_doc_freq_count = *args.min_doc_freq_count;
  ensure_out_dir(args.out);
  auto X = lnp::build_matrix(profiles, kind, cfg);
  std::optional<int> df;
  if (kind == lnp::ModelKind::metamap_binary) df = cfg.min_doc_freq_binary;
  if (kind == lnp::ModelKind::metamap_count) df = cfg.min_doc_freq_count;
  lnp::save_matrix(X, join(args.out, "matrix.csv"),
                   join(args.out, "matrix.json"), df);
  std::cout << "wrote " << X.n_rows() << "x" << X.n_cols() << " "
            << lnp::to_string(X.kind) << " matrix to " << args.out << "\n";
}

// ---------------------------------------------------------------------------

struct BaselineArgs {
  CohortArgs cohort;
  ConfigPaths configs;
  std::string run_config;
  std::string out;
  double threshold = 0.5;
};

void cmd_baseline(const BaselineArgs& args) {
  ConfigPaths paths = args.configs;
  apply_run_config(args.run_config, paths);
  auto baseline_cfg = load_baseline(paths);
  ensure_out_dir(args.out);
  auto cohort = load_cohort_args(args.cohort);
  std::vector<std::string> warnings;
  auto preds = lnp::baseline_predictions(cohort, baseline_cfg, &warnings);

  lnp::json out = lnp::json::object();
  for (const auto& [pid, v] : preds) out[pid] = v;
  std::ofstream pf(join(args.out, "baseline_predictions.json"));
  pf << out.dump(2) << "\n";

  bool labeled = !cohort.patients.empty();
  for (const auto& p : cohort.patients)
    if (!p.label.has_value()) labeled = false;
  if (labeled) {
    std::vector<std::string> ids;
    std::vector<double> probs;
    std::vector<bool> y;
    for (const auto& p : cohort.patients) {
      ids.push_back(p.patient_id);
      probs.push_back(preds.at(p.patient_id) ? 1.0 : 0.0);
      y.push_back(*p.label);
    }
    auto report = lnp::evaluate_probabilities(ids, probs, y, args.threshold,
                                              /*with_auc=*/false);
    report.warnings = warnings;
    lnp::save_report(report, join(args.out, "report.json"));
  }
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "wrote baseline predictions for " << preds.size()
            << " patients to " << args.out << "\n";
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  CohortArgs cohort;
  ConfigPaths configs;
  std::string run_config;
  std::string matrix_csv;
  std::string matrix_header;
  std::string model = "mixed";
  std::string out;
  std::uint64_t seed = 0;
  double train_fraction = 0.75;
  bool no_stratify = false;
  double threshold = 0.5;
  int cv_folds = 5;
  int max_epochs = 300;
  double tolerance = 1e-8;
  bool uniform_class_weight = false;
};

lnp::TrainConfig train_config_from(const TrainArgs& args) {
  lnp::TrainConfig cfg;
  cfg.threshold = args.threshold;
  cfg.cv_folds = args.cv_folds;
  cfg.optimizer.max_epochs = args.max_epochs;
  cfg.optimizer.tolerance = args.tolerance;
  cfg.optimizer.seed = args.seed;
  cfg.class_weight = args.uniform_class_weight ? lnp::ClassWeight::uniform
                                               : lnp::ClassWeight::balanced;
  cfg.validate();
  return cfg;
}

// Staged mode: split the prebuilt matrix rows with the same partition rule
// the cohort split uses, tune, fit, and score.
void train_from_matrix(const TrainArgs& args) {
  auto X = lnp::load_matrix(args.matrix_csv, args.matrix_header);
  std::map<std::string, bool> label_of;
  lnp::for_each_jsonl(args.cohort.labels, [&](int line_no, const lnp::json& row) {
    label_of[lnp::require_string(row, "patient_id", args.cohort.labels,
                                 line_no)] =
        lnp::require_bool(row, "label", args.cohort.labels, line_no);
  });
  std::vector<bool> labels;
  for (const auto& pid : X.patient_ids) {
    auto it = label_of.find(pid);
    if (it == label_of.end())
      throw lnp::data_error("patient " + pid + " has no label");
    labels.push_back(it->second);
  }

  auto train_idx = lnp::detail::pick_train_indices(
      labels, args.train_fraction, !args.no_stratify, args.seed);
  std::vector<bool> in_train(labels.size(), false);
  for (auto i : train_idx) in_train[i] = true;
  std::vector<std::size_t> train_rows, test_rows;
  for (std::size_t i = 0; i < labels.size(); ++i)
    (in_train[i] ? train_rows : test_rows).push_back(i);

  auto X_train = lnp::detail::take_rows(X, train_rows);
  auto X_test = lnp::detail::take_rows(X, test_rows);
  std::vector<int> y_train, y_test;
  for (auto i : train_rows) y_train.push_back(labels[i] ? 1 : 0);
  for (auto i : test_rows) y_test.push_back(labels[i] ? 1 : 0);

  auto cfg = train_config_from(args);
  auto grid = lnp::grid_search(X_train, y_train, cfg);
  auto weights = lnp::sample_weights_for(y_train, cfg.class_weight);
  auto model =
      lnp::fit_sag(X_train, y_train, grid.best_C, weights, cfg.optimizer);
  model.metadata.cv_accuracy_table = grid.accuracy_table;
  model.metadata.train_fingerprint = lnp::train_fingerprint(X_train, y_train);
  model.metadata.model_kind = lnp::to_string(X.kind);

  ensure_out_dir(args.out);
  lnp::save_model(model, join(args.out, "model.json"));
  auto probs = lnp::predict_proba_matrix(model, X_test);
  std::vector<bool> y_test_b;
  for (int v : y_test) y_test_b.push_back(v != 0);
  auto report = lnp::evaluate_probabilities(X_test.patient_ids, probs,
                                            y_test_b, cfg.threshold);
  lnp::save_report(report, join(args.out, "report.json"));
  std::cout << "best C " << grid.best_C << "; wrote model.json and "
            << "report.json to " << args.out << "\n";
}

void cmd_train(const TrainArgs& args) {
  if (!args.matrix_csv.empty()) {
    train_from_matrix(args);
    return;
  }
  ConfigPaths paths = args.configs;
  apply_run_config(args.run_config, paths);
  auto extraction = load_extraction(paths);
  auto baseline_cfg = load_baseline(paths);
  auto featurizer_cfg = lnp::defaults::featurizer();
  auto kind = lnp::model_kind_from_string(args.model);
  auto cfg = train_config_from(args);

  auto prepared = lnp::prepare_cohort(load_cohort_args(args.cohort),
                                      extraction, baseline_cfg);
  auto outcome = lnp::run_train(prepared, kind, featurizer_cfg, cfg,
                                args.train_fraction, !args.no_stratify,
                                args.seed);
  ensure_out_dir(args.out);
  outcome.test_report.warnings.insert(outcome.test_report.warnings.end(),
                                      prepared.warnings.begin(),
                                      prepared.warnings.end());
  lnp::save_report(outcome.test_report, join(args.out, "report.json"));

  if (kind != lnp::ModelKind::baseline) {
    lnp::save_model(outcome.model, join(args.out, "model.json"));
    // error dossiers over the test split, with text snippets
    std::set<std::string> test_ids(outcome.test_ids.begin(),
                                   outcome.test_ids.end());
    lnp::Cohort test;
    std::vector<lnp::ConceptProfile> test_profiles;
    for (std::size_t i = 0; i < prepared.cohort.patients.size(); ++i) {
      if (!test_ids.count(prepared.cohort.patients[i].patient_id)) continue;
      test.patients.push_back(prepared.cohort.patients[i]);
      test_profiles.push_back(prepared.profiles[i]);
    }
    auto X_test = lnp::project_profiles(
        test_profiles, outcome.model.feature_names,
        lnp::matrix_kind_from_string(outcome.model.metadata.model_kind),
        featurizer_cfg.structured_feature_name);
    auto dossiers = lnp::error_report(outcome.model, X_test, test,
                                      cfg.threshold, &extraction);
    lnp::save_error_report(dossiers, join(args.out, "errors.json"));
    std::cout << "best C " << outcome.grid.best_C << "; ";
  }
  std::cout << "wrote artifacts for model '" << args.model << "' to "
            << args.out << "\n";
}

// ---------------------------------------------------------------------------

struct ValidateArgs {
  CohortArgs cohort;
  ConfigPaths configs;
  std::string run_config;
  std::string model_file;
  std::string out;
  double threshold = 0.5;
};

void cmd_validate(const ValidateArgs& args) {
  ConfigPaths paths = args.configs;
  apply_run_config(args.run_config, paths);
  auto extraction = load_extraction(paths);
  auto baseline_cfg = load_baseline(paths);
  auto model = lnp::load_model(args.model_file);
  auto prepared = lnp::prepare_cohort(load_cohort_args(args.cohort),
                                      extraction, baseline_cfg);
  auto report = lnp::run_validate(model, prepared, lnp::defaults::featurizer(),
                                  args.threshold);
  ensure_out_dir(args.out);
  lnp::save_report(report, join(args.out, "report.json"));
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "validated " << prepared.cohort.patients.size()
            << " patients; wrote report.json to " << args.out << "\n";
}

// ---------------------------------------------------------------------------

struct ExplainArgs {
  std::string model_file;
  std::string matrix_csv;
  std::string matrix_header;
  std::string out;
};

void cmd_explain(const ExplainArgs& args) {
  auto model = lnp::load_model(args.model_file);
  auto X = lnp::load_matrix(args.matrix_csv, args.matrix_header);
  auto report = lnp::shap_linear(model, X);
  ensure_out_dir(args.out);
  lnp::save_attributions(report, join(args.out, "attributions.csv"),
                         join(args.out, "mean_abs.csv"));
  std::cout << "wrote attributions for " << report.patient_ids.size()
            << " patients to " << args.out << "\n";
}

// ---------------------------------------------------------------------------

struct ReportArgs {
  std::string report_file;
  std::string errors_file;
};

void cmd_report(const ReportArgs& args) {
  auto r = lnp::load_report(args.report_file);
  std::cout << "confusion: tp=" << r.confusion.tp << " fp=" << r.confusion.fp
            << " tn=" << r.confusion.tn << " fn=" << r.confusion.fn << "\n";
  std::cout << "sensitivity  " << lnp::format_metric(r.metrics.sensitivity)
            << "\n";
  std::cout << "specificity  " << lnp::format_metric(r.metrics.specificity)
            << "\n";
  std::cout << "ppv          " << lnp::format_metric(r.metrics.ppv) << "\n";
  std::cout << "npv          " << lnp::format_metric(r.metrics.npv) << "\n";
  std::cout << "f_measure    " << lnp::format_metric(r.metrics.f_measure)
            << "\n";
  std::cout << "auc          " << lnp::format_metric(r.auc) << "\n";
  if (!r.warnings.empty()) {
    std::cout << "warnings:\n";
    for (const auto& w : r.warnings) std::cout << "  " << w << "\n";
  }
  if (!args.errors_file.empty()) {
    std::ifstream in(args.errors_file);
    if (!in) throw lnp::data_error("cannot open " + args.errors_file);
    lnp::json dossiers;
    in >> dossiers;
    std::cout << dossiers.size() << " misclassified patients:\n";
    for (const auto& d : dossiers) {
      std::cout << "  " << d.at("patient_id").get<std::string>()
                << " p=" << d.at("probability").get<double>()
                << (d.at("actual").get<bool>() ? " (false negative)"
                                               : " (false positive)")
                << "\n";
    }
  }
}

void add_cohort_options(CLI::App* cmd, CohortArgs& args, bool labels_required) {
  cmd->add_option("--notes", args.notes, "notes.jsonl path");
  cmd->add_option("--labs", args.labs, "labs.jsonl path");
  cmd->add_option("--codes", args.codes, "codes.jsonl path");
  auto* lab = cmd->add_option("--labels", args.labels, "labels.jsonl path");
  if (labels_required) lab->required();
  cmd->add_option("--encounters", args.encounters,
                  "encounters.jsonl path (optional)");
  cmd->add_option("--min-encounters", args.min_encounters,
                  "drop patients with fewer encounters");
}

void add_config_options(CLI::App* cmd, ConfigPaths& paths,
                        std::string& run_config) {
  cmd->add_option("--lexicon", paths.lexicon, "lexicon.tsv path");
  cmd->add_option("--regex", paths.regex, "regex.json path");
  cmd->add_option("--negation", paths.negation, "negation.json path");
  cmd->add_option("--baseline", paths.baseline, "baseline.json path");
  cmd->add_option("--abbrev", paths.abbreviations, "abbreviation list path");
  cmd->add_option("--config", run_config,
                  "run config JSON bundling the paths above");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lupus nephritis phenotyping from EHR bundles"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "generate a synthetic cohort");
  synth->add_option("--config", synth_args.config, "synthetic config JSON");
  synth->add_option("--out", synth_args.out, "output directory")->required();
  std::uint64_t synth_seed = 0;
  auto* synth_seed_opt =
      synth->add_option("--seed", synth_seed, "override the config seed");

  ExtractArgs extract_args;
  auto* extract =
      app.add_subcommand("extract", "extract per-patient concept profiles");
  add_cohort_options(extract, extract_args.cohort, false);
  extract->get_option("--notes")->required();
  add_config_options(extract, extract_args.configs, extract_args.run_config);
  extract->add_option("--out", extract_args.out, "output directory")
      ->required();

  FeaturizeArgs feat_args;
  auto* feat = app.add_subcommand("featurize", "build a feature matrix");
  feat->add_option("--profiles", feat_args.profiles, "profiles.jsonl path")
      ->required();
  feat->add_option("--model", feat_args.model,
                   "feature design: binary, count, or mixed");
  int min_df_binary = 0, min_df_count = 0;
  auto* dfb = feat->add_option("--min-df-binary", min_df_binary,
                               "binary document-frequency threshold");
  auto* dfc = feat->add_option("--min-df-count", min_df_count,
                               "count document-frequency threshold");
  feat->add_option("--out", feat_args.out, "output directory")->required();

  BaselineArgs baseline_args;
  auto* baseline =
      app.add_subcommand("baseline", "run the structured-data rule");
  add_cohort_options(baseline, baseline_args.cohort, false);
  add_config_options(baseline, baseline_args.configs,
                     baseline_args.run_config);
  baseline->add_option("--out", baseline_args.out, "output directory")
      ->required();
  baseline->add_option("--threshold", baseline_args.threshold,
                       "classification threshold");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train and evaluate a model");
  add_cohort_options(train, train_args.cohort, true);
  add_config_options(train, train_args.configs, train_args.run_config);
  train->add_option("--matrix", train_args.matrix_csv,
                    "prebuilt matrix.csv (staged mode)");
  train->add_option("--matrix-header", train_args.matrix_header,
                    "matrix.json sidecar for --matrix");
  train->add_option("--model", train_args.model,
                    "baseline, binary, count, or mixed");
  train->add_option("--out", train_args.out, "output directory")->required();
  train->add_option("--seed", train_args.seed, "split/optimizer seed");
  train->add_option("--train-fraction", train_args.train_fraction,
                    "training fraction of the cohort");
  train->add_flag("--no-stratify", train_args.no_stratify,
                  "disable stratified splitting");
  train->add_option("--threshold", train_args.threshold,
                    "classification threshold");
  train->add_option("--folds", train_args.cv_folds, "cross-validation folds");
  train->add_option("--max-epochs", train_args.max_epochs,
                    "optimizer epoch cap");
  train->add_option("--tol", train_args.tolerance, "optimizer tolerance");
  train->add_flag("--uniform-class-weight", train_args.uniform_class_weight,
                  "disable balanced class weighting");

  ValidateArgs validate_args;
  auto* validate =
      app.add_subcommand("validate", "score a saved model on a new cohort");
  add_cohort_options(validate, validate_args.cohort, true);
  add_config_options(validate, validate_args.configs,
                     validate_args.run_config);
  validate->add_option("--model-file", validate_args.model_file,
                       "model.json path")
      ->required();
  validate->add_option("--out", validate_args.out, "output directory")
      ->required();
  validate->add_option("--threshold", validate_args.threshold,
                       "classification threshold");

  ExplainArgs explain_args;
  auto* explain =
      app.add_subcommand("explain", "Shapley attributions for a matrix");
  explain->add_option("--model-file", explain_args.model_file,
                      "model.json path")
      ->required();
  explain->add_option("--matrix", explain_args.matrix_csv, "matrix.csv path")
      ->required();
  explain->add_option("--matrix-header", explain_args.matrix_header,
                      "matrix.json sidecar")
      ->required();
  explain->add_option("--out", explain_args.out, "output directory")
      ->required();

  ReportArgs report_args;
  auto* report = app.add_subcommand("report", "pretty-print a report.json");
  report->add_option("--report", report_args.report_file, "report.json path")
      ->required();
  report->add_option("--errors", report_args.errors_file,
                     "errors.json path (optional)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) {
      if (*synth_seed_opt) synth_args.seed = synth_seed;
      cmd_synth(synth_args);
    } else if (extract->parsed()) {
      cmd_extract(extract_args);
    } else if (feat->parsed()) {
      if (*dfb) feat_args.min_doc_freq_binary = min_df_binary;
      if (*dfc) feat_args.min_doc_freq_count = min_df_count;
      cmd_featurize(feat_args);
    } else if (baseline->parsed()) {
      cmd_baseline(baseline_args);
    } else if (train->parsed()) {
      cmd_train(train_args);
    } else if (validate->parsed()) {
      cmd_validate(validate_args);
    } else if (explain->parsed()) {
      cmd_explain(explain_args);
    } else if (report->parsed()) {
      cmd_report(report_args);
    }
  } catch (const lnp::config_error& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
