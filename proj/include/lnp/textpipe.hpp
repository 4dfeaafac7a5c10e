#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "lnp/cohort.hpp"

namespace lnp {

// ---------------------------------------------------------------------------
// Normalization helpers

inline bool is_space_byte(char c) {
  return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' ||
         c == '\v';
}

// Collapses whitespace runs to single spaces and trims the ends. Case is
// preserved; this is the duplicate-detection key.
inline std::string normalize_whitespace(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (is_space_byte(c)) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(c);
    }
  }
  return out;
}

inline std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return s;
}

// ---------------------------------------------------------------------------
// Duplicate-note removal

// Among notes of the same patient whose whitespace-normalized text is
// identical, only the earliest-dated one survives (ties broken by lowest
// note_id). Relative order of survivors is preserved.
inline std::vector<ClinicalNote> deduplicate_notes(
    const std::vector<ClinicalNote>& notes) {
  // key: patient_id + '\x1f' + normalized text -> index of best note so far
  std::unordered_map<std::string, std::size_t> best;
  for (std::size_t i = 0; i < notes.size(); ++i) {
    std::string key =
        notes[i].patient_id + '\x1f' + normalize_whitespace(notes[i].text);
    auto [it, inserted] = best.try_emplace(key, i);
    if (!inserted) {
      const ClinicalNote& cur = notes[it->second];
      const ClinicalNote& cand = notes[i];
      if (cand.date < cur.date ||
          (cand.date == cur.date && cand.note_id < cur.note_id))
        it->second = i;
    }
  }
  std::vector<bool> keep(notes.size(), false);
  for (const auto& [key, idx] : best) keep[idx] = true;
  std::vector<ClinicalNote> out;
  out.reserve(best.size());
  for (std::size_t i = 0; i < notes.size(); ++i)
    if (keep[i]) out.push_back(notes[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Tokenization

struct Token {
  std::size_t begin = 0;  // byte offsets into the sentence text
  std::size_t end = 0;
  std::string text;
  std::string lower;

  bool operator==(const Token&) const = default;
};

namespace detail {

inline bool is_alnum(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0;
}
inline bool is_digit(char c) {
  return std::isdigit(static_cast<unsigned char>(c)) != 0;
}
inline bool is_alpha(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) != 0;
}

// Consumes digits with an optional single ".digits" group: "0.5", "500".
inline std::size_t scan_number(const std::string& s, std::size_t i) {
  std::size_t j = i;
  while (j < s.size() && is_digit(s[j])) ++j;
  if (j + 1 < s.size() && s[j] == '.' && is_digit(s[j + 1])) {
    ++j;
    while (j < s.size() && is_digit(s[j])) ++j;
  }
  return j;
}

// Consumes a unit attached directly to a number: "g", "gm", "g/day",
// "mg/24h". Returns i when no unit is attached.
inline std::size_t scan_attached_unit(const std::string& s, std::size_t i) {
  if (i >= s.size() || !is_alpha(s[i])) return i;
  std::size_t j = i;
  while (j < s.size() && is_alpha(s[j])) ++j;
  if (j < s.size() && s[j] == '/' && j + 1 < s.size() && is_alnum(s[j + 1])) {
    ++j;
    while (j < s.size() && is_alnum(s[j])) ++j;
  }
  return j;
}

}  // namespace detail

// Splits sentence text into tokens: alphanumeric word runs, measurement
// tokens like ">0.5" or "0.5g/day" kept whole, and single-character
// punctuation. Token spans reconstruct the covered substrings exactly.
inline std::vector<Token> tokenize(const std::string& text) {
  using namespace detail;
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    if (is_space_byte(text[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    char c = text[i];
    if ((c == '>' || c == '<')) {
      std::size_t k = i + 1;
      if (k < text.size() && text[k] == '=') ++k;
      if (k < text.size() && is_digit(text[k])) {
        j = scan_attached_unit(text, scan_number(text, k));
      } else {
        j = i + 1;  // bare comparator, punctuation token
      }
    } else if (is_digit(c)) {
      j = scan_attached_unit(text, scan_number(text, i));
    } else if (is_alnum(c)) {
      j = i + 1;
      while (j < text.size() && is_alnum(text[j])) ++j;
    } else {
      j = i + 1;  // punctuation
    }
    Token tok;
    tok.begin = i;
    tok.end = j;
    tok.text = text.substr(i, j - i);
    tok.lower = to_lower(tok.text);
    tokens.push_back(std::move(tok));
    i = j;
  }
  return tokens;
}

// ---------------------------------------------------------------------------
// Sentence segmentation

struct Sentence {
  std::string note_id;
  int index = 0;  // 0-based ordinal within the note
  std::string text;
  std::vector<Token> tokens;

  bool operator==(const Sentence&) const = default;
};

inline const std::vector<std::string>& default_abbreviations() {
  static const std::vector<std::string> kAbbrev = {"dr.", "vs.", "e.g.",
                                                   "pt."};
  return kAbbrev;
}

inline std::vector<std::string> load_abbreviations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open abbreviation file " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
      line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    out.push_back(to_lower(line));
  }
  return out;
}

namespace detail {

// The maximal [A-Za-z.] run ending at (and including) the '.' at pos,
// lowercased: "(e.g." -> "e.g.".
inline std::string word_before_period(const std::string& text,
                                      std::size_t pos) {
  std::size_t start = pos;
  while (start > 0 &&
         (is_alpha(text[start - 1]) || text[start - 1] == '.'))
    --start;
  return to_lower(text.substr(start, pos - start + 1));
}

}  // namespace detail

// Rule-based segmentation. Boundaries fall after '.', '!', '?' or ';'
// followed by whitespace, and at blank lines. Colons never split (negation
// scopes must survive "negative renal disorder: ..." constructions), and an
// abbreviation list suppresses splits after forms like "dr." or "e.g.".
inline std::vector<Sentence> segment_sentences(
    const std::string& text, const std::string& note_id = "",
    const std::vector<std::string>& abbreviations = default_abbreviations()) {
  std::set<std::string> abbrev(abbreviations.begin(), abbreviations.end());
  std::vector<std::pair<std::size_t, std::size_t>> spans;

  std::size_t start = 0;
  std::size_t i = 0;
  auto flush = [&](std::size_t end_exclusive) {
    // trim to the first/last non-whitespace byte
    std::size_t a = start;
    while (a < end_exclusive && is_space_byte(text[a])) ++a;
    std::size_t b = end_exclusive;
    while (b > a && is_space_byte(text[b - 1])) --b;
    if (a < b) spans.emplace_back(a, b);
  };

  while (i < text.size()) {
    char c = text[i];
    bool terminator = (c == '.' || c == '!' || c == '?' || c == ';');
    if (terminator &&
        (i + 1 == text.size() || is_space_byte(text[i + 1]))) {
      if (c == '.' && abbrev.count(detail::word_before_period(text, i))) {
        ++i;
        continue;
      }
      flush(i + 1);
      start = i + 1;
      ++i;
      continue;
    }
    if (c == '\n') {
      // blank line (possibly with interior spaces) ends the sentence
      std::size_t k = i + 1;
      while (k < text.size() && (text[k] == ' ' || text[k] == '\t' ||
                                 text[k] == '\r'))
        ++k;
      if (k < text.size() && text[k] == '\n') {
        flush(i);
        start = k + 1;
        i = k + 1;
        continue;
      }
    }
    ++i;
  }
  flush(text.size());

  std::vector<Sentence> sentences;
  sentences.reserve(spans.size());
  for (std::size_t s = 0; s < spans.size(); ++s) {
    Sentence sent;
    sent.note_id = note_id;
    sent.index = static_cast<int>(s);
    sent.text = text.substr(spans[s].first, spans[s].second - spans[s].first);
    sent.tokens = tokenize(sent.text);
    sentences.push_back(std::move(sent));
  }
  return sentences;
}

}  // namespace lnp
