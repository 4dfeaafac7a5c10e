#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lnp/cohort.hpp"
#include "lnp/jsonl.hpp"
#include "lnp/textpipe.hpp"

namespace lnp {

// ---------------------------------------------------------------------------
// Structured-data rule: qualifying diagnosis codes OR qualifying lab rows.

struct LabRule {
  std::string name_pattern;  // case-insensitive substring of lab name or code
  std::string comparator;    // ">", ">=", "<", "<=", "="
  double threshold = 0.0;
  std::string unit;  // "ratio" or a mass-per-day unit like "mg/24h"

  bool operator==(const LabRule&) const = default;
};

struct BaselineRuleConfig {
  std::vector<std::string> ln_icd9;   // trailing-wildcard patterns
  std::vector<std::string> ln_icd10;
  std::vector<LabRule> lab_rules;

  bool operator==(const BaselineRuleConfig&) const = default;

  void validate() const {
    if (ln_icd9.empty() && ln_icd10.empty() && lab_rules.empty())
      throw config_error(
          "baseline rule needs at least one code pattern or lab rule");
    for (const auto& r : lab_rules) {
      if (r.comparator != ">" && r.comparator != ">=" && r.comparator != "<" &&
          r.comparator != "<=" && r.comparator != "=")
        throw config_error("baseline lab rule: unknown comparator \"" +
                           r.comparator + "\"");
    }
  }
};

inline BaselineRuleConfig parse_baseline_config(const json& obj) {
  BaselineRuleConfig cfg;
  if (obj.contains("ln_icd9"))
    for (const auto& p : obj.at("ln_icd9"))
      cfg.ln_icd9.push_back(p.get<std::string>());
  if (obj.contains("ln_icd10"))
    for (const auto& p : obj.at("ln_icd10"))
      cfg.ln_icd10.push_back(p.get<std::string>());
  if (obj.contains("lab_rules")) {
    for (const auto& r : obj.at("lab_rules")) {
      LabRule rule;
      rule.name_pattern = r.at("name_pattern").get<std::string>();
      rule.comparator = r.at("comparator").get<std::string>();
      rule.threshold = r.at("threshold").get<double>();
      rule.unit = r.at("unit").get<std::string>();
      cfg.lab_rules.push_back(std::move(rule));
    }
  }
  cfg.validate();
  return cfg;
}

inline BaselineRuleConfig load_baseline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open baseline config " + path);
  json obj;
  try {
    in >> obj;
  } catch (const json::parse_error& e) {
    throw config_error(path + ": " + e.what());
  }
  return parse_baseline_config(obj);
}

namespace detail {

// Trailing-wildcard code matching: "583.8*" covers "583.81", "583.89".
inline bool code_pattern_match(const std::string& pattern,
                               const std::string& code) {
  if (!pattern.empty() && pattern.back() == '*')
    return code.compare(0, pattern.size() - 1, pattern, 0,
                        pattern.size() - 1) == 0;
  return code == pattern;
}

// Converts a lab value to the rule's unit. Ratios have no scale; mass-per-
// day units normalize to mg per 24h. Returns nullopt when the row's unit is
// not convertible.
inline std::optional<double> convert_to_rule_unit(double value,
                                                  const std::string& row_unit,
                                                  const std::string& rule_unit) {
  auto norm = [](const std::string& u) { return to_lower(u); };
  std::string ru = norm(rule_unit), u = norm(row_unit);

  static const std::map<std::string, double> mg_per_day{
      {"mg/24h", 1.0},   {"mg/24hr", 1.0}, {"mg/day", 1.0}, {"mg/d", 1.0},
      {"g/24h", 1000.0}, {"g/24hr", 1000.0}, {"g/day", 1000.0},
      {"g/d", 1000.0},   {"gm/24h", 1000.0}, {"gm/day", 1000.0}};
  static const std::map<std::string, double> ratio{{"ratio", 1.0},
                                                   {"mg/mg", 1.0},
                                                   {"mg/mg creat", 1.0}};

  const std::map<std::string, double>* table = nullptr;
  if (ratio.count(ru))
    table = &ratio;
  else if (mg_per_day.count(ru))
    table = &mg_per_day;
  else
    return std::nullopt;

  auto from = table->find(u);
  if (from == table->end()) return std::nullopt;
  double in_base = value * from->second;
  return in_base / table->at(ru);
}

inline bool compare(double value, const std::string& comparator,
                    double threshold) {
  if (comparator == ">") return value > threshold;
  if (comparator == ">=") return value >= threshold;
  if (comparator == "<") return value < threshold;
  if (comparator == "<=") return value <= threshold;
  return value == threshold;
}

inline bool contains_ci(const std::string& haystack,
                        const std::string& needle) {
  return to_lower(haystack).find(to_lower(needle)) != std::string::npos;
}

}  // namespace detail

// True iff any diagnosis code matches a configured pattern or any lab row
// satisfies a lab rule. Rows whose unit cannot be converted are skipped with
// a warning. Note text plays no part here.
inline bool classify_baseline(const PatientRecord& patient,
                              const BaselineRuleConfig& config,
                              std::vector<std::string>* warnings = nullptr) {
  for (const auto& dx : patient.codes) {
    const auto& patterns =
        dx.system == CodeSystem::ICD9 ? config.ln_icd9 : config.ln_icd10;
    for (const auto& pat : patterns)
      if (detail::code_pattern_match(pat, dx.code)) return true;
  }
  for (const auto& lab : patient.labs) {
    for (const auto& rule : config.lab_rules) {
      if (!detail::contains_ci(lab.name, rule.name_pattern) &&
          !detail::contains_ci(lab.code, rule.name_pattern))
        continue;
      auto converted =
          detail::convert_to_rule_unit(lab.value, lab.unit, rule.unit);
      if (!converted) {
        if (warnings)
          warnings->push_back("patient " + patient.patient_id + ": lab \"" +
                              lab.name + "\" unit \"" + lab.unit +
                              "\" not convertible to \"" + rule.unit +
                              "\"; row skipped");
        continue;
      }
      if (detail::compare(*converted, rule.comparator, rule.threshold))
        return true;
    }
  }
  return false;
}

inline std::map<std::string, bool> baseline_predictions(
    const Cohort& cohort, const BaselineRuleConfig& config,
    std::vector<std::string>* warnings = nullptr) {
  std::map<std::string, bool> out;
  for (const auto& p : cohort.patients)
    out[p.patient_id] = classify_baseline(p, config, warnings);
  return out;
}

}  // namespace lnp
