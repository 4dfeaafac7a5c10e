#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "lnp/cohort.hpp"
#include "lnp/jsonl.hpp"
#include "lnp/textpipe.hpp"

namespace lnp {

// ---------------------------------------------------------------------------
// Lexicon: the dictionary matcher's term list (CUI -> token sequences)

struct LexiconEntry {
  std::string preferred_name;
  std::vector<std::vector<std::string>> terms;  // lowercased token sequences

  bool operator==(const LexiconEntry&) const = default;
};

struct Lexicon {
  std::map<std::string, LexiconEntry> entries;  // keyed by CUI

  bool operator==(const Lexicon&) const = default;

  void add_term(const std::string& cui, const std::string& preferred_name,
                const std::string& term) {
    auto tokens = tokenize(to_lower(term));
    if (tokens.empty())
      throw config_error("lexicon term for " + cui + " is empty");
    std::vector<std::string> seq;
    seq.reserve(tokens.size());
    for (auto& t : tokens) seq.push_back(t.lower);
    auto& entry = entries[cui];
    if (entry.preferred_name.empty()) entry.preferred_name = preferred_name;
    entry.terms.push_back(std::move(seq));
  }
};

// lexicon.tsv: cui<TAB>preferred_name<TAB>term, one term per line. Lines
// starting with '#' are comments.
inline Lexicon load_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open lexicon file " + path);
  Lexicon lex;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::size_t t1 = line.find('\t');
    std::size_t t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw config_error(path + ":" + std::to_string(line_no) +
                         ": expected cui<TAB>name<TAB>term");
    lex.add_term(line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1),
                 line.substr(t2 + 1));
  }
  return lex;
}

// ---------------------------------------------------------------------------
// Concept mentions and dictionary matching

struct ConceptMention {
  std::string cui;
  std::string note_id;
  int sentence_index = 0;
  std::size_t start_token = 0;
  std::size_t end_token = 0;  // exclusive
  bool negated = false;
  std::string matched_text;

  bool operator==(const ConceptMention&) const = default;
};

namespace detail {

// Token-level trie for greedy longest-match lookup.
struct TrieNode {
  std::map<std::string, std::size_t> next;
  std::string cui;  // non-empty when a term ends here
};

struct LexiconTrie {
  std::vector<TrieNode> nodes{TrieNode{}};

  explicit LexiconTrie(const Lexicon& lex) {
    for (const auto& [cui, entry] : lex.entries) {
      for (const auto& term : entry.terms) {
        std::size_t cur = 0;
        for (const auto& tok : term) {
          auto it = nodes[cur].next.find(tok);
          if (it == nodes[cur].next.end()) {
            nodes.push_back(TrieNode{});
            it = nodes[cur].next.emplace(tok, nodes.size() - 1).first;
          }
          cur = it->second;
        }
        // When two CUIs share a term, keep the lexicographically smallest
        // so matching stays deterministic.
        if (nodes[cur].cui.empty() || cui < nodes[cur].cui)
          nodes[cur].cui = cui;
      }
    }
  }
};

}  // namespace detail

// Greedy longest-match dictionary matcher. Build once per lexicon; matching
// walks the token trie left to right, so overlapping shorter matches are
// suppressed. Negated flags are left unset for detect_negation to fill.
class ConceptMatcher {
 public:
  explicit ConceptMatcher(const Lexicon& lexicon) : trie_(lexicon) {}

  std::vector<ConceptMention> match(const Sentence& sentence) const {
    std::vector<ConceptMention> mentions;
    const auto& toks = sentence.tokens;
    std::size_t i = 0;
    while (i < toks.size()) {
      std::size_t node = 0;
      std::size_t best_end = 0;
      const std::string* best_cui = nullptr;
      for (std::size_t j = i; j < toks.size(); ++j) {
        auto it = trie_.nodes[node].next.find(toks[j].lower);
        if (it == trie_.nodes[node].next.end()) break;
        node = it->second;
        if (!trie_.nodes[node].cui.empty()) {
          best_end = j + 1;
          best_cui = &trie_.nodes[node].cui;
        }
      }
      if (best_end > i) {
        ConceptMention m;
        m.cui = *best_cui;
        m.note_id = sentence.note_id;
        m.sentence_index = sentence.index;
        m.start_token = i;
        m.end_token = best_end;
        m.matched_text = sentence.text.substr(
            toks[i].begin, toks[best_end - 1].end - toks[i].begin);
        mentions.push_back(std::move(m));
        i = best_end;
      } else {
        ++i;
      }
    }
    return mentions;
  }

 private:
  detail::LexiconTrie trie_;
};

inline std::vector<ConceptMention> match_concepts(const Sentence& sentence,
                                                  const Lexicon& lexicon) {
  return ConceptMatcher(lexicon).match(sentence);
}

// ---------------------------------------------------------------------------
// Negation detection (trigger/scope rules)

struct NegationConfig {
  std::vector<std::vector<std::string>> pre_triggers;
  std::vector<std::vector<std::string>> post_triggers;
  std::vector<std::string> terminators;
  // nullopt means scope extends to the sentence boundary
  std::optional<int> scope_window;

  bool operator==(const NegationConfig&) const = default;
};

inline NegationConfig parse_negation_config(const json& obj) {
  NegationConfig cfg;
  auto read_triggers = [&](const char* key) {
    std::vector<std::vector<std::string>> out;
    if (!obj.contains(key)) return out;
    for (const auto& trig : obj.at(key)) {
      auto toks = tokenize(to_lower(trig.get<std::string>()));
      if (toks.empty())
        throw config_error(std::string("empty negation trigger in ") + key);
      std::vector<std::string> seq;
      for (auto& t : toks) seq.push_back(t.lower);
      out.push_back(std::move(seq));
    }
    return out;
  };
  cfg.pre_triggers = read_triggers("pre_triggers");
  cfg.post_triggers = read_triggers("post_triggers");
  if (obj.contains("terminators"))
    for (const auto& t : obj.at("terminators"))
      cfg.terminators.push_back(to_lower(t.get<std::string>()));
  if (obj.contains("scope")) {
    const auto& scope = obj.at("scope");
    if (scope.is_string()) {
      if (scope.get<std::string>() != "sentence")
        throw config_error("scope must be \"sentence\" or an integer");
    } else if (scope.is_number_integer()) {
      int w = scope.get<int>();
      if (w < 1) throw config_error("scope window must be >= 1");
      cfg.scope_window = w;
    } else {
      throw config_error("scope must be \"sentence\" or an integer");
    }
  }
  return cfg;
}

inline NegationConfig load_negation_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open negation config " + path);
  json obj;
  try {
    in >> obj;
  } catch (const json::parse_error& e) {
    throw config_error(path + ": " + e.what());
  }
  return parse_negation_config(obj);
}

namespace detail {

struct TriggerHit {
  std::size_t begin = 0;  // token positions
  std::size_t end = 0;
};

inline std::vector<TriggerHit> find_trigger_hits(
    const std::vector<Token>& toks,
    const std::vector<std::vector<std::string>>& triggers) {
  std::vector<TriggerHit> hits;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    for (const auto& trig : triggers) {
      if (i + trig.size() > toks.size()) continue;
      bool match = true;
      for (std::size_t k = 0; k < trig.size(); ++k) {
        if (toks[i + k].lower != trig[k]) {
          match = false;
          break;
        }
      }
      if (match) hits.push_back({i, i + trig.size()});
    }
  }
  return hits;
}

// True when a trigger reaches the token range [start, end) of a mention.
inline bool span_negated(const std::vector<Token>& toks,
                         std::size_t start, std::size_t end,
                         const std::vector<TriggerHit>& pre,
                         const std::vector<TriggerHit>& post,
                         const std::vector<std::string>& terminators,
                         const std::optional<int>& scope_window) {
  auto is_terminator = [&](std::size_t pos) {
    for (const auto& t : terminators)
      if (toks[pos].lower == t) return true;
    return false;
  };
  auto clear_between = [&](std::size_t a, std::size_t b) {
    for (std::size_t p = a; p < b; ++p)
      if (is_terminator(p)) return false;
    return true;
  };
  for (const auto& h : pre) {
    if (h.end > start) continue;
    if (scope_window &&
        start - h.end >= static_cast<std::size_t>(*scope_window))
      continue;
    if (clear_between(h.end, start)) return true;
  }
  for (const auto& h : post) {
    if (h.begin < end) continue;
    if (scope_window &&
        h.begin - end >= static_cast<std::size_t>(*scope_window))
      continue;
    if (clear_between(end, h.begin)) return true;
  }
  return false;
}

}  // namespace detail

// Sets the negated flag on each mention: negated iff a pre-trigger precedes
// it in scope with no terminator between, or a post-trigger follows in scope.
// The mention set itself is never changed.
inline std::vector<ConceptMention> detect_negation(
    const Sentence& sentence, std::vector<ConceptMention> mentions,
    const NegationConfig& config) {
  auto pre = detail::find_trigger_hits(sentence.tokens, config.pre_triggers);
  auto post = detail::find_trigger_hits(sentence.tokens, config.post_triggers);
  for (auto& m : mentions) {
    m.negated = detail::span_negated(sentence.tokens, m.start_token,
                                     m.end_token, pre, post,
                                     config.terminators, config.scope_window);
  }
  return mentions;
}

// ---------------------------------------------------------------------------
// Regex concepts

struct RegexConceptSet {
  // concept name -> pattern strings (compiled lazily into `compiled`)
  std::map<std::string, std::vector<std::string>> concepts;
  std::map<std::string, std::vector<std::regex>> compiled;

  bool operator==(const RegexConceptSet& other) const {
    return concepts == other.concepts;
  }

  void compile() {
    compiled.clear();
    for (const auto& [name, patterns] : concepts) {
      auto& out = compiled[name];
      for (const auto& p : patterns) {
        try {
          out.emplace_back(p, std::regex::ECMAScript | std::regex::icase |
                                  std::regex::optimize);
        } catch (const std::regex_error& e) {
          throw config_error("regex concept \"" + name + "\": pattern \"" + p +
                             "\" failed to compile: " + e.what());
        }
      }
    }
  }
};

inline RegexConceptSet parse_regex_concepts(const json& obj) {
  RegexConceptSet set;
  if (!obj.contains("concepts") || !obj.at("concepts").is_object())
    throw config_error("regex config must contain a \"concepts\" object");
  for (const auto& [name, patterns] : obj.at("concepts").items()) {
    std::vector<std::string> list;
    for (const auto& p : patterns) list.push_back(p.get<std::string>());
    set.concepts[name] = std::move(list);
  }
  set.compile();
  return set;
}

inline RegexConceptSet load_regex_concepts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open regex config " + path);
  json obj;
  try {
    in >> obj;
  } catch (const json::parse_error& e) {
    throw config_error(path + ": " + e.what());
  }
  return parse_regex_concepts(obj);
}

// Runs every pattern over each sentence, drops matches that fall inside a
// negation scope, and aggregates non-negated hit counts per concept.
inline std::map<std::string, int> match_regex_concepts(
    const std::vector<Sentence>& sentences, const RegexConceptSet& regex_set,
    const NegationConfig& negation_config) {
  std::map<std::string, int> counts;
  for (const auto& [name, patterns] : regex_set.compiled) {
    (void)patterns;
    counts[name];  // concepts always present, even at zero
  }
  for (const auto& sent : sentences) {
    auto pre =
        detail::find_trigger_hits(sent.tokens, negation_config.pre_triggers);
    auto post =
        detail::find_trigger_hits(sent.tokens, negation_config.post_triggers);
    for (const auto& [name, patterns] : regex_set.compiled) {
      for (const auto& re : patterns) {
        for (auto it = std::sregex_iterator(sent.text.begin(),
                                            sent.text.end(), re);
             it != std::sregex_iterator(); ++it) {
          std::size_t m_begin = static_cast<std::size_t>(it->position());
          std::size_t m_end = m_begin + static_cast<std::size_t>(it->length());
          // token span overlapping the character match
          std::size_t t_begin = sent.tokens.size(), t_end = 0;
          for (std::size_t t = 0; t < sent.tokens.size(); ++t) {
            if (sent.tokens[t].end > m_begin && sent.tokens[t].begin < m_end) {
              t_begin = std::min(t_begin, t);
              t_end = std::max(t_end, t + 1);
            }
          }
          if (t_begin >= t_end) continue;  // matched only whitespace
          if (!detail::span_negated(sent.tokens, t_begin, t_end, pre, post,
                                    negation_config.terminators,
                                    negation_config.scope_window))
            ++counts[name];
        }
      }
    }
  }
  return counts;
}

// Everything the note pipeline needs, bundled for reuse across patients.
struct ExtractionConfig {
  Lexicon lexicon;
  RegexConceptSet regex_set;
  NegationConfig negation;
  std::vector<std::string> abbreviations = default_abbreviations();
};

// ---------------------------------------------------------------------------
// Per-patient profile

struct ConceptProfile {
  std::string patient_id;
  std::map<std::string, int> cui_counts;   // non-negated mention counts
  std::map<std::string, int> regex_hits;   // non-negated hit counts
  bool structured_positive = false;

  bool operator==(const ConceptProfile&) const = default;

  int count_for(const std::string& feature) const {
    if (auto it = cui_counts.find(feature); it != cui_counts.end())
      return it->second;
    if (auto it = regex_hits.find(feature); it != regex_hits.end())
      return it->second;
    return 0;
  }
};

// Full note pipeline for one patient: dedup -> segment -> tokenize ->
// dictionary match -> negation -> regex. Counts sum non-negated mentions
// over all surviving notes. Pass a prebuilt matcher when extracting many
// patients against the same lexicon.
inline ConceptProfile extract_patient_profile(
    const PatientRecord& patient, const ConceptMatcher& matcher,
    const RegexConceptSet& regex_set, const NegationConfig& negation_config,
    bool baseline_flag,
    const std::vector<std::string>& abbreviations = default_abbreviations()) {
  if (regex_set.compiled.size() != regex_set.concepts.size())
    throw config_error("regex concept set is not compiled");
  ConceptProfile profile;
  profile.patient_id = patient.patient_id;
  profile.structured_positive = baseline_flag;
  for (const auto& [name, patterns] : regex_set.concepts) {
    (void)patterns;
    profile.regex_hits[name] = 0;
  }

  auto notes = deduplicate_notes(patient.notes);
  for (const auto& note : notes) {
    auto sentences = segment_sentences(note.text, note.note_id, abbreviations);
    for (const auto& sent : sentences) {
      auto mentions =
          detect_negation(sent, matcher.match(sent), negation_config);
      for (const auto& m : mentions)
        if (!m.negated) ++profile.cui_counts[m.cui];
    }
    auto hits = match_regex_concepts(sentences, regex_set, negation_config);
    for (const auto& [name, n] : hits) profile.regex_hits[name] += n;
  }
  return profile;
}

inline ConceptProfile extract_patient_profile(
    const PatientRecord& patient, const Lexicon& lexicon,
    const RegexConceptSet& regex_set, const NegationConfig& negation_config,
    bool baseline_flag,
    const std::vector<std::string>& abbreviations = default_abbreviations()) {
  return extract_patient_profile(patient, ConceptMatcher(lexicon), regex_set,
                                 negation_config, baseline_flag,
                                 abbreviations);
}

// ---------------------------------------------------------------------------
// Profile serialization (profiles.jsonl)

inline json profile_to_json(const ConceptProfile& p) {
  json cui = json::object();
  for (const auto& [k, v] : p.cui_counts) cui[k] = v;
  json regex = json::object();
  for (const auto& [k, v] : p.regex_hits) regex[k] = v;
  return json{{"patient_id", p.patient_id},
              {"cui_counts", cui},
              {"regex_hits", regex},
              {"structured_positive", p.structured_positive}};
}

inline void save_profiles(const std::vector<ConceptProfile>& profiles,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot open " + path + " for writing");
  for (const auto& p : profiles) out << profile_to_json(p).dump() << "\n";
}

inline std::vector<ConceptProfile> load_profiles(const std::string& path) {
  std::vector<ConceptProfile> profiles;
  for_each_jsonl(path, [&](int line_no, const json& row) {
    ConceptProfile p;
    p.patient_id = require_string(row, "patient_id", path, line_no);
    for (const auto& [k, v] :
         require_field(row, "cui_counts", path, line_no).items())
      p.cui_counts[k] = v.get<int>();
    for (const auto& [k, v] :
         require_field(row, "regex_hits", path, line_no).items())
      p.regex_hits[k] = v.get<int>();
    p.structured_positive =
        require_bool(row, "structured_positive", path, line_no);
    profiles.push_back(std::move(p));
  });
  return profiles;
}

}  // namespace lnp
