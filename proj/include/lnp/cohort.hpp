#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <compare>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lnp/errors.hpp"
#include "lnp/jsonl.hpp"
#include "lnp/rng.hpp"

namespace lnp {

// ---------------------------------------------------------------------------
// Calendar date ("YYYY-MM-DD")

struct Date {
  int year = 1970;
  int month = 1;
  int day = 1;

  auto operator<=>(const Date&) const = default;

  static Date parse(const std::string& s) {
    auto fail = [&] { throw data_error("invalid date \"" + s + "\""); };
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') fail();
    for (int i : {0, 1, 2, 3, 5, 6, 8, 9})
      if (!std::isdigit(static_cast<unsigned char>(s[i]))) fail();
    Date d;
    d.year = std::stoi(s.substr(0, 4));
    d.month = std::stoi(s.substr(5, 2));
    d.day = std::stoi(s.substr(8, 2));
    if (d.month < 1 || d.month > 12 || d.day < 1 || d.day > 31) fail();
    return d;
  }

  std::string str() const {
    char buf[11];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
    return buf;
  }
};

// ---------------------------------------------------------------------------
// Record types

struct ClinicalNote {
  std::string note_id;
  std::string patient_id;
  std::string department;
  std::string note_type;
  Date date;
  std::string text;

  bool operator==(const ClinicalNote&) const = default;
};

struct LabResult {
  std::string patient_id;
  Date date;
  std::string code;  // LOINC or local
  std::string name;
  double value = 0.0;
  std::string unit;

  bool operator==(const LabResult&) const = default;
};

enum class CodeSystem { ICD9, ICD10 };

inline std::string to_string(CodeSystem s) {
  return s == CodeSystem::ICD9 ? "ICD9" : "ICD10";
}

struct DiagnosisCode {
  std::string patient_id;
  Date date;
  CodeSystem system = CodeSystem::ICD10;
  std::string code;

  bool operator==(const DiagnosisCode&) const = default;
};

// Syntactic validity per coding system. ICD-9 codes are numeric (with V/E
// prefixes), ICD-10 codes are letter-prefixed.
inline bool code_matches_system(const std::string& code, CodeSystem system) {
  if (code.empty()) return false;
  auto digits = [](const std::string& s, std::size_t from, std::size_t count) {
    if (s.size() < from + count) return false;
    for (std::size_t i = from; i < from + count; ++i)
      if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    return true;
  };
  if (system == CodeSystem::ICD9) {
    std::size_t pos = 0;
    if (code[0] == 'V' || code[0] == 'E') pos = 1;
    std::size_t head = code.find('.');
    std::size_t head_len = (head == std::string::npos ? code.size() : head) - pos;
    if (head_len < 2 || head_len > 4) return false;
    if (!digits(code, pos, head_len)) return false;
    if (head != std::string::npos) {
      std::size_t tail = code.size() - head - 1;
      if (tail < 1 || tail > 2 || !digits(code, head + 1, tail)) return false;
    }
    return true;
  }
  // ICD-10: letter, two alphanumerics, optional ".XXXX"
  if (!std::isupper(static_cast<unsigned char>(code[0]))) return false;
  if (code.size() < 3) return false;
  for (std::size_t i = 1; i < 3; ++i)
    if (!std::isalnum(static_cast<unsigned char>(code[i]))) return false;
  if (code.size() == 3) return true;
  if (code[3] != '.') return false;
  std::size_t tail = code.size() - 4;
  if (tail < 1 || tail > 4) return false;
  for (std::size_t i = 4; i < code.size(); ++i)
    if (!std::isalnum(static_cast<unsigned char>(code[i]))) return false;
  return true;
}

struct PatientRecord {
  std::string patient_id;
  std::vector<ClinicalNote> notes;
  std::vector<LabResult> labs;
  std::vector<DiagnosisCode> codes;
  int encounter_count = 0;
  std::optional<bool> label;  // gold phenotype status

  bool operator==(const PatientRecord&) const = default;

  int distinct_note_dates() const {
    std::set<Date> dates;
    for (const auto& n : notes) dates.insert(n.date);
    return static_cast<int>(dates.size());
  }
};

struct Cohort {
  std::vector<PatientRecord> patients;
  std::string provenance;

  bool operator==(const Cohort&) const = default;

  const PatientRecord* find(const std::string& patient_id) const {
    for (const auto& p : patients)
      if (p.patient_id == patient_id) return &p;
    return nullptr;
  }
};

// ---------------------------------------------------------------------------
// Ingestion

// Loads the JSONL bundle and groups rows by patient. Patients are ordered by
// patient_id; rows referencing unknown patients create that patient.
// encounter_count comes from encounters.jsonl when given, otherwise the
// number of distinct note dates.
inline Cohort load_cohort(const std::string& note_path,
                          const std::string& lab_path,
                          const std::string& code_path,
                          const std::string& label_path,
                          const std::string& encounter_path = "") {
  std::map<std::string, PatientRecord> by_id;
  auto patient = [&](const std::string& pid) -> PatientRecord& {
    auto [it, inserted] = by_id.try_emplace(pid);
    if (inserted) it->second.patient_id = pid;
    return it->second;
  };

  std::unordered_set<std::string> seen_note_ids;
  for_each_jsonl(note_path, [&](int line_no, const json& row) {
    ClinicalNote note;
    note.patient_id = require_string(row, "patient_id", note_path, line_no);
    note.note_id = require_string(row, "note_id", note_path, line_no);
    note.department = require_string(row, "department", note_path, line_no);
    note.note_type = require_string(row, "note_type", note_path, line_no);
    try {
      note.date = Date::parse(require_string(row, "date", note_path, line_no));
    } catch (const data_error& e) {
      throw data_error(note_path + ":" + std::to_string(line_no) + ": " +
                       e.what());
    }
    note.text = require_string(row, "text", note_path, line_no);
    if (note.text.find_first_not_of(" \t\r\n\f\v") == std::string::npos)
      throw data_error(note_path + ":" + std::to_string(line_no) +
                       ": note text is empty after whitespace normalization");
    if (!seen_note_ids.insert(note.note_id).second)
      throw data_error(note_path + ":" + std::to_string(line_no) +
                       ": duplicate note_id \"" + note.note_id + "\"");
    patient(note.patient_id).notes.push_back(std::move(note));
  });

  if (!lab_path.empty()) {
    for_each_jsonl(lab_path, [&](int line_no, const json& row) {
      LabResult lab;
      lab.patient_id = require_string(row, "patient_id", lab_path, line_no);
      lab.date = Date::parse(require_string(row, "date", lab_path, line_no));
      lab.code = require_string(row, "code", lab_path, line_no);
      lab.name = require_string(row, "name", lab_path, line_no);
      lab.value = require_number(row, "value", lab_path, line_no);
      if (!std::isfinite(lab.value))
        throw data_error(lab_path + ":" + std::to_string(line_no) +
                         ": lab value must be finite");
      lab.unit = require_string(row, "unit", lab_path, line_no);
      if (lab.unit.empty())
        throw data_error(lab_path + ":" + std::to_string(line_no) +
                         ": lab unit must be non-empty");
      patient(lab.patient_id).labs.push_back(std::move(lab));
    });
  }

  if (!code_path.empty()) {
    for_each_jsonl(code_path, [&](int line_no, const json& row) {
      DiagnosisCode dx;
      dx.patient_id = require_string(row, "patient_id", code_path, line_no);
      dx.date = Date::parse(require_string(row, "date", code_path, line_no));
      std::string sys = require_string(row, "system", code_path, line_no);
      if (sys == "ICD9")
        dx.system = CodeSystem::ICD9;
      else if (sys == "ICD10")
        dx.system = CodeSystem::ICD10;
      else
        throw data_error(code_path + ":" + std::to_string(line_no) +
                         ": unknown code system \"" + sys + "\"");
      dx.code = require_string(row, "code", code_path, line_no);
      if (!code_matches_system(dx.code, dx.system))
        throw data_error(code_path + ":" + std::to_string(line_no) +
                         ": code \"" + dx.code + "\" does not match " + sys +
                         " syntax");
      patient(dx.patient_id).codes.push_back(std::move(dx));
    });
  }

  if (!label_path.empty()) {
    for_each_jsonl(label_path, [&](int line_no, const json& row) {
      std::string pid = require_string(row, "patient_id", label_path, line_no);
      patient(pid).label = require_bool(row, "label", label_path, line_no);
    });
  }

  std::unordered_map<std::string, int> explicit_counts;
  if (!encounter_path.empty()) {
    std::ifstream probe(encounter_path);
    if (probe) {
      for_each_jsonl(encounter_path, [&](int line_no, const json& row) {
        std::string pid =
            require_string(row, "patient_id", encounter_path, line_no);
        double n = require_number(row, "encounter_count", encounter_path,
                                  line_no);
        if (n < 0 || n != std::floor(n))
          throw data_error(encounter_path + ":" + std::to_string(line_no) +
                           ": encounter_count must be a non-negative integer");
        explicit_counts[pid] = static_cast<int>(n);
      });
    }
  }

  Cohort cohort;
  cohort.patients.reserve(by_id.size());
  for (auto& [pid, rec] : by_id) {
    auto it = explicit_counts.find(pid);
    rec.encounter_count =
        it != explicit_counts.end() ? it->second : rec.distinct_note_dates();
    cohort.patients.push_back(std::move(rec));
  }
  return cohort;
}

// ---------------------------------------------------------------------------
// Serialization (inverse of load_cohort)

inline void save_cohort(const Cohort& cohort, const std::string& note_path,
                        const std::string& lab_path,
                        const std::string& code_path,
                        const std::string& label_path,
                        const std::string& encounter_path = "") {
  std::ofstream notes(note_path), labs(lab_path), codes(code_path),
      labels(label_path);
  if (!notes || !labs || !codes || !labels)
    throw data_error("cannot open cohort output files for writing");
  std::ofstream encounters;
  if (!encounter_path.empty()) {
    encounters.open(encounter_path);
    if (!encounters)
      throw data_error("cannot open " + encounter_path + " for writing");
  }

  for (const auto& p : cohort.patients) {
    for (const auto& n : p.notes) {
      json row{{"patient_id", n.patient_id}, {"note_id", n.note_id},
               {"department", n.department}, {"note_type", n.note_type},
               {"date", n.date.str()},       {"text", n.text}};
      notes << row.dump() << "\n";
    }
    for (const auto& l : p.labs) {
      json row{{"patient_id", l.patient_id}, {"date", l.date.str()},
               {"code", l.code},             {"name", l.name},
               {"value", l.value},           {"unit", l.unit}};
      labs << row.dump() << "\n";
    }
    for (const auto& c : p.codes) {
      json row{{"patient_id", c.patient_id},
               {"date", c.date.str()},
               {"system", to_string(c.system)},
               {"code", c.code}};
      codes << row.dump() << "\n";
    }
    if (p.label.has_value()) {
      json row{{"patient_id", p.patient_id}, {"label", *p.label}};
      labels << row.dump() << "\n";
    }
    if (encounters.is_open()) {
      json row{{"patient_id", p.patient_id},
               {"encounter_count", p.encounter_count}};
      encounters << row.dump() << "\n";
    }
  }
}

// ---------------------------------------------------------------------------
// Cohort filtering and splitting

inline Cohort filter_min_encounters(const Cohort& cohort, int min_encounters) {
  if (min_encounters < 0)
    throw config_error("min_encounters must be non-negative");
  Cohort out;
  out.provenance = cohort.provenance;
  for (const auto& p : cohort.patients)
    if (p.encounter_count >= min_encounters) out.patients.push_back(p);
  return out;
}

namespace detail {

// Picks train-set indices: floor(n * train_fraction) patients overall, and
// under stratification floor(n_c * fraction) per class with the remainder
// assigned to train from the class with the largest fractional part (ties
// favor the positive class).
inline std::vector<std::size_t> pick_train_indices(
    const std::vector<bool>& labels, double train_fraction, bool stratified,
    std::uint64_t seed) {
  const std::size_t n = labels.size();
  const auto train_total =
      static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_fraction));
  Rng rng(seed);

  if (!stratified) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    order.resize(train_total);
    return order;
  }

  std::vector<std::size_t> neg, pos;
  for (std::size_t i = 0; i < n; ++i) (labels[i] ? pos : neg).push_back(i);
  rng.shuffle(neg);
  rng.shuffle(pos);

  double neg_exact = static_cast<double>(neg.size()) * train_fraction;
  double pos_exact = static_cast<double>(pos.size()) * train_fraction;
  auto neg_take = static_cast<std::size_t>(std::floor(neg_exact));
  auto pos_take = static_cast<std::size_t>(std::floor(pos_exact));
  std::size_t remainder = train_total - neg_take - pos_take;
  double neg_frac = neg_exact - std::floor(neg_exact);
  double pos_frac = pos_exact - std::floor(pos_exact);
  while (remainder > 0) {
    if (pos_frac >= neg_frac && pos_take < pos.size()) {
      ++pos_take;
      pos_frac = -1.0;
    } else if (neg_take < neg.size()) {
      ++neg_take;
      neg_frac = -1.0;
    } else {
      ++pos_take;
    }
    --remainder;
  }

  std::vector<std::size_t> train(neg.begin(), neg.begin() + neg_take);
  train.insert(train.end(), pos.begin(), pos.begin() + pos_take);
  return train;
}

}  // namespace detail

struct SplitResult {
  Cohort train;
  Cohort test;
};

// Deterministic 2-way partition. Patients keep cohort order inside each part.
inline SplitResult split_cohort(const Cohort& cohort, double train_fraction,
                                bool stratified, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw config_error("train_fraction must be in (0, 1)");
  std::vector<bool> labels;
  labels.reserve(cohort.patients.size());
  for (const auto& p : cohort.patients) {
    if (!p.label.has_value())
      throw data_error("patient " + p.patient_id +
                       " has no label; labels are required for splitting");
    labels.push_back(*p.label);
  }

  auto train_idx =
      detail::pick_train_indices(labels, train_fraction, stratified, seed);
  std::vector<bool> in_train(cohort.patients.size(), false);
  for (auto i : train_idx) in_train[i] = true;

  SplitResult out;
  out.train.provenance = cohort.provenance;
  out.test.provenance = cohort.provenance;
  for (std::size_t i = 0; i < cohort.patients.size(); ++i)
    (in_train[i] ? out.train : out.test).patients.push_back(cohort.patients[i]);
  return out;
}

}  // namespace lnp
