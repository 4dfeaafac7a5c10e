#pragma once

#include "lnp/baseline.hpp"
#include "lnp/concepts.hpp"
#include "lnp/featurize.hpp"

namespace lnp {
namespace defaults {

// Starter lexicon for the lupus-nephritis concept set. CUI identifiers are
// standard UMLS concepts; the term lists are project-authored defaults, not
// an export from a licensed vocabulary. configs/lexicon.tsv mirrors this
// table and is the file to edit for real deployments.
inline Lexicon lexicon() {
  Lexicon lex;
  auto add = [&](const char* cui, const char* name,
                 std::initializer_list<const char*> terms) {
    for (const char* t : terms) lex.add_term(cui, name, t);
  };
  add("C0024143", "lupus nephritis",
      {"lupus nephritis", "lupus glomerulonephritis", "glomerulonephritis",
       "sle nephritis"});
  add("C0027697", "nephritis", {"nephritis"});
  add("C0022658", "kidney disease",
      {"kidney disease", "renal disease", "nephropathy"});
  add("C0022646", "kidney", {"kidney", "renal"});
  add("C0033687", "proteinuria", {"proteinuria"});
  add("C1962972", "proteinuria finding",
      {"proteinuria finding", "protein in urine"});
  add("C0268757", "diffuse proliferative lupus nephritis",
      {"diffuse lupus nephritis", "diffuse proliferative glomerulonephritis"});
  add("C0268758", "membranous lupus nephritis",
      {"membranous lupus nephritis", "lupus membranous nephropathy"});
  add("C4053958", "lupus nephritis class II",
      {"lupus nephritis class ii", "nephritis class ii",
       "mesangial proliferative lupus nephritis"});
  add("C4053959", "lupus nephritis class III",
      {"lupus nephritis class iii", "nephritis class iii",
       "focal lupus nephritis"});
  add("C4053955", "lupus nephritis class IV",
      {"lupus nephritis class iv", "nephritis class iv",
       "diffuse segmental lupus nephritis"});
  add("C4054543", "lupus nephritis class V",
      {"lupus nephritis class v", "nephritis class v",
       "membranous lupus glomerulonephritis"});
  return lex;
}

// Default regex concepts: the four histologic classes plus quantified
// proteinuria. Patterns cover Roman and Arabic numerals, the "LN"
// abbreviation (so "stage 2 LN" fires class II), and the common quantity
// spellings. configs/regex.json mirrors this set.
inline RegexConceptSet regex_concepts() {
  RegexConceptSet set;
  auto class_patterns = [](const std::string& roman, const std::string& arabic) {
    return std::vector<std::string>{
        "nephritis[^.;]{0,20}?\\bclass\\s+(" + roman + "|" + arabic + ")\\b",
        "\\bclass\\s+(" + roman + "|" + arabic +
            ")\\b[^.;]{0,20}?(lupus\\s+)?nephritis",
        "\\b(stage|class)\\s+(" + roman + "|" + arabic + ")\\s+ln\\b",
        "\\bln\\s+(stage|class)\\s+(" + roman + "|" + arabic + ")\\b"};
  };
  set.concepts["nephritis_class_II"] = class_patterns("ii", "2");
  set.concepts["nephritis_class_III"] = class_patterns("iii", "3");
  set.concepts["nephritis_class_IV"] = class_patterns("iv", "4");
  set.concepts["nephritis_class_V"] = class_patterns("v", "5");
  set.concepts["proteinuria"] = {
      "proteinuria\\s*>\\s*=?\\s*0?\\.5",
      "\\b0\\.5\\s*g(m|rams?)?\\s*/\\s*(day|24\\s*-?\\s*h(ou)?rs?|24\\s*h)\\b",
      "\\b500\\s*mg\\s*/\\s*(day|24\\s*-?\\s*h(ou)?rs?|24\\s*h)\\b",
      "urine\\s+protein[^.;]{0,20}?>\\s*=?\\s*(0?\\.5|500)"};
  set.compile();
  return set;
}

// Trigger/scope negation defaults. Scope runs to the end of the sentence;
// contrast words end it. configs/negation.json mirrors this set.
inline NegationConfig negation() {
  json cfg = {
      {"pre_triggers",
       {"no", "not", "without", "denies", "denied", "deny", "negative",
        "negative for", "no evidence of", "free of", "rules out", "ruled out",
        "absence of"}},
      {"post_triggers",
       {"ruled out", "unlikely", "not present", "was negative",
        "is negative", "resolved"}},
      {"terminators", {"but", "however", "although", "though", "except"}},
      {"scope", "sentence"}};
  return parse_negation_config(cfg);
}

// Example structured-data rule. The code lists are illustrative defaults
// authored for this project; site deployments should substitute their own
// curated lists via configs/baseline.json.
inline BaselineRuleConfig baseline_rule() {
  BaselineRuleConfig cfg;
  cfg.ln_icd9 = {"583.81", "583.89"};
  cfg.ln_icd10 = {"M32.14", "M32.15"};
  cfg.lab_rules = {
      {"protein/creatinine", ">", 0.5, "ratio"},
      {"urine protein", ">", 500.0, "mg/24h"},
  };
  cfg.validate();
  return cfg;
}

// The 13-feature mixed design: 7 curated CUIs, 5 regex concepts, 1
// structured flag.
inline FeaturizerConfig featurizer() {
  FeaturizerConfig cfg;
  cfg.curated_cuis = {"C0024143", "C0268757", "C0268758", "C4053955",
                      "C4053958", "C4053959", "C4054543"};
  cfg.regex_concepts = {"nephritis_class_II", "nephritis_class_III",
                        "nephritis_class_IV", "nephritis_class_V",
                        "proteinuria"};
  return cfg;
}

inline ExtractionConfig extraction() {
  ExtractionConfig cfg;
  cfg.lexicon = lexicon();
  cfg.regex_set = regex_concepts();
  cfg.negation = negation();
  return cfg;
}

}  // namespace defaults
}  // namespace lnp
