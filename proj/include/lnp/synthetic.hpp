#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "lnp/cohort.hpp"
#include "lnp/rng.hpp"

namespace lnp {

// ---------------------------------------------------------------------------
// Synthetic cohorts with planted note, lab, and code evidence. Calibration
// defaults follow the published cohort statistics (472 patients, 37.7%
// prevalence, 68.58 +/- 59.37 notes per patient).

struct ConceptSignal {
  double p_case = 0.0;     // P(phrase planted | case)
  double p_control = 0.0;  // P(phrase planted | control)

  bool operator==(const ConceptSignal&) const = default;
};

struct SyntheticConfig {
  int n_patients = 472;
  double prevalence = 0.377;
  double note_count_mean = 68.58;
  double note_count_sd = 59.37;
  std::map<std::string, ConceptSignal> signal_strengths;
  double missing_lab_rate = 0.30;
  std::uint64_t seed = 20407;

  void validate() const {
    if (n_patients < 0) throw config_error("n_patients must be >= 0");
    if (!(prevalence > 0.0 && prevalence < 1.0))
      throw config_error("prevalence must be in (0, 1)");
    if (!(note_count_mean > 0.0))
      throw config_error("note_count_mean must be positive");
    if (note_count_sd < 0.0)
      throw config_error("note_count_sd must be non-negative");
    if (missing_lab_rate < 0.0 || missing_lab_rate > 1.0)
      throw config_error("missing_lab_rate must be in [0, 1]");
    for (const auto& [name, sig] : signal_strengths) {
      if (sig.p_case < 0.0 || sig.p_case > 1.0 || sig.p_control < 0.0 ||
          sig.p_control > 1.0)
        throw config_error("signal probabilities for \"" + name +
                           "\" must be in [0, 1]");
    }
  }
};

inline SyntheticConfig default_synthetic_config() {
  SyntheticConfig cfg;
  // roughly 90% of cases end up with at least one planted note concept
  cfg.signal_strengths = {
      {"lupus nephritis", {0.65, 0.03}},
      {"proteinuria", {0.40, 0.12}},
      {"nephritis class IV", {0.32, 0.02}},
      {"proteinuria>0.5 g/day", {0.35, 0.08}},
  };
  return cfg;
}

inline SyntheticConfig parse_synthetic_config(const json& obj) {
  SyntheticConfig cfg = default_synthetic_config();
  if (obj.contains("n_patients")) cfg.n_patients = obj.at("n_patients").get<int>();
  if (obj.contains("prevalence"))
    cfg.prevalence = obj.at("prevalence").get<double>();
  if (obj.contains("note_count_mean"))
    cfg.note_count_mean = obj.at("note_count_mean").get<double>();
  if (obj.contains("note_count_sd"))
    cfg.note_count_sd = obj.at("note_count_sd").get<double>();
  if (obj.contains("missing_lab_rate"))
    cfg.missing_lab_rate = obj.at("missing_lab_rate").get<double>();
  if (obj.contains("seed")) cfg.seed = obj.at("seed").get<std::uint64_t>();
  if (obj.contains("signal_strengths")) {
    cfg.signal_strengths.clear();
    for (const auto& [name, pair] : obj.at("signal_strengths").items()) {
      if (!pair.is_array() || pair.size() != 2)
        throw config_error("signal_strengths entries must be [p_case, p_control]");
      cfg.signal_strengths[name] = {pair[0].get<double>(),
                                    pair[1].get<double>()};
    }
  }
  cfg.validate();
  return cfg;
}

inline SyntheticConfig load_synthetic_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open synthetic config " + path);
  json obj;
  try {
    in >> obj;
  } catch (const json::parse_error& e) {
    throw config_error(path + ": " + e.what());
  }
  return parse_synthetic_config(obj);
}

namespace detail {

// Structured-evidence rates used alongside signal_strengths. Cases lose
// their qualifying lab at missing_lab_rate; controls pick up transient
// proteinuria and stray codes at the rates below.
constexpr double kCaseLnCodeRate = 0.25;
constexpr double kControlLnCodeRate = 0.02;
constexpr double kControlQualifyingLabRate = 0.35;
constexpr double kNegatedDistractorRate = 0.25;

inline const std::vector<std::string>& filler_sentences() {
  static const std::vector<std::string> kFiller = {
      "Patient seen in clinic for routine follow up.",
      "Vital signs within normal limits.",
      "No acute distress noted today.",
      "Continue current medication regimen.",
      "Discussed plan of care with patient.",
      "Labs reviewed and stable.",
      "Follow up in three months.",
      "Patient reports good adherence to therapy.",
      "Blood pressure well controlled.",
      "Joint exam unremarkable.",
      "Reviewed imaging results with patient.",
      "No new complaints at this visit.",
  };
  return kFiller;
}

inline std::string positive_template(std::size_t pick,
                                     const std::string& phrase) {
  switch (pick % 5) {
    case 0: return "Assessment notes " + phrase + ".";
    case 1: return "Findings consistent with " + phrase + ".";
    case 2: return "History significant for " + phrase + ".";
    case 3: return "Biopsy results demonstrate " + phrase + ".";
    default: return "Continued management of " + phrase + ".";
  }
}

inline std::string negated_template(std::size_t pick,
                                    const std::string& phrase) {
  switch (pick % 4) {
    case 0: return "No evidence of " + phrase + ".";
    case 1: return "Patient denies " + phrase + ".";
    case 2: return "Negative for " + phrase + ".";
    default: return "Workup shows no " + phrase + ".";
  }
}

inline Date random_date(Rng& rng) {
  Date d;
  d.year = 2015 + static_cast<int>(rng.uniform_int(6));
  d.month = 1 + static_cast<int>(rng.uniform_int(12));
  d.day = 1 + static_cast<int>(rng.uniform_int(28));
  return d;
}

}  // namespace detail

// Draws n_patients records: label ~ Bernoulli(prevalence); per-patient note
// count from a log-normal fitted to (mean, sd), clamped to >= 1; concept
// phrases planted per signal_strengths with negated distractors mixed in;
// structured evidence emitted so the rule baseline has signal but misses the
// cases whose labs are absent. Byte-identical for a fixed seed.
inline Cohort generate_synthetic_cohort(const SyntheticConfig& config) {
  config.validate();
  Rng rng(config.seed);

  // log-normal parameters matched to the requested mean and sd
  double sigma = 0.0;
  double mu = std::log(config.note_count_mean);
  if (config.note_count_sd > 0.0) {
    double cv2 = (config.note_count_sd * config.note_count_sd) /
                 (config.note_count_mean * config.note_count_mean);
    sigma = std::sqrt(std::log1p(cv2));
    mu = std::log(config.note_count_mean) - 0.5 * sigma * sigma;
  }

  const auto& filler = detail::filler_sentences();
  Cohort cohort;
  cohort.provenance = "synthetic seed=" + std::to_string(config.seed);
  cohort.patients.reserve(static_cast<std::size_t>(config.n_patients));

  for (int idx = 0; idx < config.n_patients; ++idx) {
    char pid_buf[16];
    std::snprintf(pid_buf, sizeof(pid_buf), "P%05d", idx);
    PatientRecord patient;
    patient.patient_id = pid_buf;
    bool is_case = rng.bernoulli(config.prevalence);
    patient.label = is_case;

    int note_count = std::max(
        1, static_cast<int>(std::lround(std::exp(mu + sigma * rng.normal()))));

    std::vector<std::string> note_texts(static_cast<std::size_t>(note_count));
    for (auto& text : note_texts) {
      std::size_t n_filler = 1 + rng.uniform_int(2);
      for (std::size_t s = 0; s < n_filler; ++s) {
        if (!text.empty()) text += ' ';
        text += filler[rng.uniform_int(filler.size())];
      }
    }

    auto plant = [&](const std::string& sentence) {
      auto& text = note_texts[rng.uniform_int(note_texts.size())];
      text += ' ';
      text += sentence;
    };

    for (const auto& [phrase, signal] : config.signal_strengths) {
      double p = is_case ? signal.p_case : signal.p_control;
      if (!rng.bernoulli(p)) continue;
      std::size_t occurrences = is_case ? 1 + rng.uniform_int(3) : 1;
      for (std::size_t k = 0; k < occurrences; ++k)
        plant(detail::positive_template(rng.uniform_int(5), phrase));
    }

    if (!config.signal_strengths.empty() &&
        rng.bernoulli(detail::kNegatedDistractorRate)) {
      auto it = config.signal_strengths.begin();
      std::advance(it, rng.uniform_int(config.signal_strengths.size()));
      plant(detail::negated_template(rng.uniform_int(4), it->first));
    }

    static const std::vector<std::string> kDepartments = {
        "nephrology", "rheumatology", "transplant"};
    static const std::vector<std::string> kNoteTypes = {
        "progress note", "consult note", "pathology report", "discharge note"};
    for (int n = 0; n < note_count; ++n) {
      ClinicalNote note;
      char nid_buf[24];
      std::snprintf(nid_buf, sizeof(nid_buf), "%s-N%04d", pid_buf, n);
      note.note_id = nid_buf;
      note.patient_id = patient.patient_id;
      note.department = kDepartments[rng.uniform_int(kDepartments.size())];
      note.note_type = kNoteTypes[rng.uniform_int(kNoteTypes.size())];
      note.date = detail::random_date(rng);
      note.text = note_texts[static_cast<std::size_t>(n)];
      patient.notes.push_back(std::move(note));
    }

    // labs: everyone gets a creatinine row; proteinuria evidence depends on
    // the label and the missing-lab rate
    {
      LabResult cr;
      cr.patient_id = patient.patient_id;
      cr.date = detail::random_date(rng);
      cr.code = "2160-0";
      cr.name = "Creatinine";
      cr.value = 0.6 + 0.8 * rng.uniform();
      cr.unit = "mg/dL";
      patient.labs.push_back(std::move(cr));
    }
    bool qualifying_lab = false;
    if (is_case)
      qualifying_lab = !rng.bernoulli(config.missing_lab_rate);
    else
      qualifying_lab = rng.bernoulli(detail::kControlQualifyingLabRate);
    bool emit_proteinuria_row = qualifying_lab || !is_case;
    if (emit_proteinuria_row) {
      LabResult lab;
      lab.patient_id = patient.patient_id;
      lab.date = detail::random_date(rng);
      if (rng.bernoulli(0.5)) {
        lab.code = "2890-2";
        lab.name = "Protein/Creatinine ratio";
        lab.unit = "ratio";
        lab.value = qualifying_lab ? 0.6 + 4.0 * rng.uniform()
                                   : 0.05 + 0.3 * rng.uniform();
      } else {
        lab.code = "2889-4";
        lab.name = "24 hour urine protein";
        lab.unit = "mg/24h";
        lab.value = qualifying_lab ? 600.0 + 2400.0 * rng.uniform()
                                   : 40.0 + 200.0 * rng.uniform();
      }
      patient.labs.push_back(std::move(lab));
    }

    // codes: an SLE code for everyone, a lupus-nephritis code by rate, and
    // occasional unrelated background codes
    {
      DiagnosisCode sle;
      sle.patient_id = patient.patient_id;
      sle.date = detail::random_date(rng);
      sle.system = CodeSystem::ICD10;
      sle.code = "M32.9";
      patient.codes.push_back(std::move(sle));
    }
    double ln_code_rate =
        is_case ? detail::kCaseLnCodeRate : detail::kControlLnCodeRate;
    if (rng.bernoulli(ln_code_rate)) {
      DiagnosisCode ln;
      ln.patient_id = patient.patient_id;
      ln.date = detail::random_date(rng);
      std::size_t pick = rng.uniform_int(3);
      if (pick == 0) {
        ln.system = CodeSystem::ICD9;
        ln.code = "583.81";
      } else {
        ln.system = CodeSystem::ICD10;
        ln.code = pick == 1 ? "M32.14" : "M32.15";
      }
      patient.codes.push_back(std::move(ln));
    }
    if (rng.bernoulli(0.4)) {
      DiagnosisCode bg;
      bg.patient_id = patient.patient_id;
      bg.date = detail::random_date(rng);
      bg.system = CodeSystem::ICD10;
      bg.code = "I10";
      patient.codes.push_back(std::move(bg));
    }

    patient.encounter_count = patient.distinct_note_dates();
    cohort.patients.push_back(std::move(patient));
  }
  return cohort;
}

}  // namespace lnp
