#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "lnp/concepts.hpp"
#include "lnp/errors.hpp"

namespace lnp {

enum class MatrixKind { binary, count, mixed };

inline std::string to_string(MatrixKind k) {
  switch (k) {
    case MatrixKind::binary: return "binary";
    case MatrixKind::count: return "count";
    default: return "mixed";
  }
}

inline MatrixKind matrix_kind_from_string(const std::string& s) {
  if (s == "binary") return MatrixKind::binary;
  if (s == "count") return MatrixKind::count;
  if (s == "mixed") return MatrixKind::mixed;
  throw config_error("unknown matrix kind \"" + s + "\"");
}

// Sparse patient x feature matrix. Rows hold (column, value) pairs sorted by
// column; zero entries are not stored.
struct FeatureMatrix {
  std::vector<std::string> patient_ids;
  std::vector<std::string> feature_names;
  std::vector<std::vector<std::pair<std::size_t, double>>> rows;
  MatrixKind kind = MatrixKind::binary;

  bool operator==(const FeatureMatrix&) const = default;

  std::size_t n_rows() const { return patient_ids.size(); }
  std::size_t n_cols() const { return feature_names.size(); }

  double at(std::size_t row, std::size_t col) const {
    for (const auto& [c, v] : rows[row])
      if (c == col) return v;
    return 0.0;
  }

  std::vector<double> dense_row(std::size_t row) const {
    std::vector<double> out(n_cols(), 0.0);
    for (const auto& [c, v] : rows[row]) out[c] = v;
    return out;
  }

  std::vector<double> column_means() const {
    std::vector<double> means(n_cols(), 0.0);
    if (rows.empty()) return means;
    for (const auto& row : rows)
      for (const auto& [c, v] : row) means[c] += v;
    for (auto& m : means) m /= static_cast<double>(rows.size());
    return means;
  }
};

struct FeaturizerConfig {
  int min_doc_freq_binary = 30;
  int min_doc_freq_count = 40;
  std::vector<std::string> curated_cuis;     // exactly 7 for the mixed design
  std::vector<std::string> regex_concepts;   // exactly 5
  std::string structured_feature_name = "RENAL";
};

// Number of patients whose profile mentions the feature at least once.
inline int document_frequency(const std::vector<ConceptProfile>& profiles,
                              const std::string& feature) {
  int n = 0;
  for (const auto& p : profiles)
    if (p.count_for(feature) >= 1) ++n;
  return n;
}

namespace detail {

inline std::vector<std::string> surviving_cuis(
    const std::vector<ConceptProfile>& profiles, int min_doc_freq) {
  std::map<std::string, int> df;
  for (const auto& p : profiles) {
    for (const auto& [cui, count] : p.cui_counts)
      if (count >= 1) ++df[cui];
  }
  std::vector<std::string> kept;  // std::map iteration is lexicographic
  for (const auto& [cui, n] : df)
    if (n >= min_doc_freq) kept.push_back(cui);
  return kept;
}

inline FeatureMatrix build_cui_matrix(
    const std::vector<ConceptProfile>& profiles, int min_doc_freq,
    MatrixKind kind) {
  if (profiles.empty()) throw data_error("cannot featurize an empty profile set");
  FeatureMatrix m;
  m.kind = kind;
  m.feature_names = surviving_cuis(profiles, min_doc_freq);
  if (m.feature_names.empty())
    throw data_error(
        "no feature reaches document frequency " +
        std::to_string(min_doc_freq) +
        "; lower the minimum document frequency for this dataset");
  std::map<std::string, std::size_t> col;
  for (std::size_t j = 0; j < m.feature_names.size(); ++j)
    col[m.feature_names[j]] = j;
  for (const auto& p : profiles) {
    m.patient_ids.push_back(p.patient_id);
    std::vector<std::pair<std::size_t, double>> row;
    for (const auto& [cui, count] : p.cui_counts) {
      auto it = col.find(cui);
      if (it == col.end() || count < 1) continue;
      row.emplace_back(it->second,
                       kind == MatrixKind::binary ? 1.0 : double(count));
    }
    std::sort(row.begin(), row.end());
    m.rows.push_back(std::move(row));
  }
  return m;
}

}  // namespace detail

// Binary CUI design: columns are the CUIs whose patient-level document
// frequency reaches the threshold, lexicographic order, entries in {0,1}.
inline FeatureMatrix build_binary_matrix(
    const std::vector<ConceptProfile>& profiles,
    const FeaturizerConfig& config) {
  return detail::build_cui_matrix(profiles, config.min_doc_freq_binary,
                                  MatrixKind::binary);
}

// Count design: same columns rule with its own threshold, raw counts.
inline FeatureMatrix build_count_matrix(
    const std::vector<ConceptProfile>& profiles,
    const FeaturizerConfig& config) {
  return detail::build_cui_matrix(profiles, config.min_doc_freq_count,
                                  MatrixKind::count);
}

// Mixed design: 7 curated CUIs (binary) + 5 regex concepts (binary) + the
// structured flag, in config order, no document-frequency filtering.
inline FeatureMatrix build_mixed_matrix(
    const std::vector<ConceptProfile>& profiles,
    const FeaturizerConfig& config) {
  if (config.curated_cuis.size() != 7)
    throw config_error("mixed design needs exactly 7 curated CUIs, got " +
                       std::to_string(config.curated_cuis.size()));
  if (config.regex_concepts.size() != 5)
    throw config_error("mixed design needs exactly 5 regex concepts, got " +
                       std::to_string(config.regex_concepts.size()));
  FeatureMatrix m;
  m.kind = MatrixKind::mixed;
  m.feature_names = config.curated_cuis;
  m.feature_names.insert(m.feature_names.end(), config.regex_concepts.begin(),
                         config.regex_concepts.end());
  m.feature_names.push_back(config.structured_feature_name);
  for (const auto& p : profiles) {
    m.patient_ids.push_back(p.patient_id);
    std::vector<std::pair<std::size_t, double>> row;
    for (std::size_t j = 0; j < config.curated_cuis.size(); ++j) {
      auto it = p.cui_counts.find(config.curated_cuis[j]);
      if (it != p.cui_counts.end() && it->second >= 1) row.emplace_back(j, 1.0);
    }
    for (std::size_t j = 0; j < config.regex_concepts.size(); ++j) {
      auto it = p.regex_hits.find(config.regex_concepts[j]);
      if (it != p.regex_hits.end() && it->second >= 1)
        row.emplace_back(config.curated_cuis.size() + j, 1.0);
    }
    if (p.structured_positive)
      row.emplace_back(m.feature_names.size() - 1, 1.0);
    m.rows.push_back(std::move(row));
  }
  return m;
}

// Projects profiles onto a fixed feature vocabulary (for scoring a test
// split or an external site). Features absent from a profile are 0.
inline FeatureMatrix project_profiles(
    const std::vector<ConceptProfile>& profiles,
    const std::vector<std::string>& feature_names, MatrixKind kind,
    const std::string& structured_feature_name = "RENAL") {
  FeatureMatrix m;
  m.kind = kind;
  m.feature_names = feature_names;
  for (const auto& p : profiles) {
    m.patient_ids.push_back(p.patient_id);
    std::vector<std::pair<std::size_t, double>> row;
    for (std::size_t j = 0; j < feature_names.size(); ++j) {
      double v = 0.0;
      if (kind == MatrixKind::mixed &&
          feature_names[j] == structured_feature_name) {
        v = p.structured_positive ? 1.0 : 0.0;
      } else {
        int count = p.count_for(feature_names[j]);
        if (kind == MatrixKind::count)
          v = double(count);
        else
          v = count >= 1 ? 1.0 : 0.0;
      }
      if (v != 0.0) row.emplace_back(j, v);
    }
    m.rows.push_back(std::move(row));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Matrix files: triplet CSV plus a JSON sidecar header

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace detail

inline void save_matrix(const FeatureMatrix& m, const std::string& csv_path,
                        const std::string& header_path,
                        std::optional<int> min_doc_freq = std::nullopt) {
  std::ofstream csv(csv_path);
  if (!csv) throw data_error("cannot open " + csv_path + " for writing");
  csv << "patient_id,feature_name,value\n";
  for (std::size_t i = 0; i < m.rows.size(); ++i)
    for (const auto& [c, v] : m.rows[i])
      csv << m.patient_ids[i] << ',' << m.feature_names[c] << ','
          << detail::format_double(v) << "\n";

  json header{{"kind", to_string(m.kind)},
              {"feature_names", m.feature_names},
              {"patient_ids", m.patient_ids},
              {"min_doc_freq",
               min_doc_freq ? json(*min_doc_freq) : json(nullptr)}};
  std::ofstream hdr(header_path);
  if (!hdr) throw data_error("cannot open " + header_path + " for writing");
  hdr << header.dump(2) << "\n";
}

inline FeatureMatrix load_matrix(const std::string& csv_path,
                                 const std::string& header_path) {
  std::ifstream hdr(header_path);
  if (!hdr) throw data_error("cannot open matrix header " + header_path);
  json header;
  try {
    hdr >> header;
  } catch (const json::parse_error& e) {
    throw data_error(header_path + ": " + e.what());
  }
  FeatureMatrix m;
  m.kind = matrix_kind_from_string(header.at("kind").get<std::string>());
  m.feature_names =
      header.at("feature_names").get<std::vector<std::string>>();
  m.patient_ids = header.at("patient_ids").get<std::vector<std::string>>();
  m.rows.assign(m.patient_ids.size(), {});

  std::map<std::string, std::size_t> row_of, col_of;
  for (std::size_t i = 0; i < m.patient_ids.size(); ++i)
    row_of[m.patient_ids[i]] = i;
  for (std::size_t j = 0; j < m.feature_names.size(); ++j)
    col_of[m.feature_names[j]] = j;

  std::ifstream csv(csv_path);
  if (!csv) throw data_error("cannot open matrix csv " + csv_path);
  std::string line;
  int line_no = 0;
  while (std::getline(csv, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 || line.empty()) continue;  // header row
    std::size_t c1 = line.find(',');
    std::size_t c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string::npos)
      throw data_error(csv_path + ":" + std::to_string(line_no) +
                       ": expected patient_id,feature_name,value");
    std::string pid = line.substr(0, c1);
    std::string feat = line.substr(c1 + 1, c2 - c1 - 1);
    double value = 0.0;
    auto value_str = line.substr(c2 + 1);
    auto [ptr, ec] = std::from_chars(
        value_str.data(), value_str.data() + value_str.size(), value);
    if (ec != std::errc() || ptr != value_str.data() + value_str.size())
      throw data_error(csv_path + ":" + std::to_string(line_no) +
                       ": bad value \"" + value_str + "\"");
    auto ri = row_of.find(pid);
    auto ci = col_of.find(feat);
    if (ri == row_of.end())
      throw data_error(csv_path + ":" + std::to_string(line_no) +
                       ": patient \"" + pid + "\" not in header");
    if (ci == col_of.end())
      throw data_error(csv_path + ":" + std::to_string(line_no) +
                       ": feature \"" + feat + "\" not in header");
    m.rows[ri->second].emplace_back(ci->second, value);
  }
  for (auto& row : m.rows) std::sort(row.begin(), row.end());
  return m;
}

}  // namespace lnp
