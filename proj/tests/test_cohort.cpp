#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "lnp/cohort.hpp"
#include "lnp/synthetic.hpp"
#include "test_util.hpp"

using namespace lnp;
using testutil::TempDir;
using testutil::write_file;

namespace {

// Writes a minimal cohort bundle and returns the four paths.
struct Bundle {
  TempDir dir{"cohort"};
  std::string notes = dir.file("notes.jsonl");
  std::string labs = dir.file("labs.jsonl");
  std::string codes = dir.file("codes.jsonl");
  std::string labels = dir.file("labels.jsonl");

  Bundle() {
    write_file(notes, "");
    write_file(labs, "");
    write_file(codes, "");
    write_file(labels, "");
  }
};

std::string note_row(const std::string& pid, const std::string& nid,
                     const std::string& text,
                     const std::string& date = "2019-03-05") {
  json row{{"patient_id", pid},    {"note_id", nid},
           {"department", "neph"}, {"note_type", "progress note"},
           {"date", date},         {"text", text}};
  return row.dump() + "\n";
}

}  // namespace

TEST_CASE("load_cohort groups rows by patient") {
  Bundle b;
  write_file(b.notes, note_row("p1", "n1", "Stable today.") +
                          note_row("p2", "n2", "Worsening edema.") +
                          note_row("p1", "n3", "Follow up."));
  auto cohort = load_cohort(b.notes, b.labs, b.codes, b.labels);
  REQUIRE(cohort.patients.size() == 2);
  CHECK(cohort.patients[0].patient_id == "p1");
  CHECK(cohort.patients[0].notes.size() == 2);
  CHECK(cohort.patients[1].notes.size() == 1);
}

TEST_CASE("label rows for unknown patients create that patient") {
  Bundle b;
  write_file(b.labels, R"({"patient_id":"ghost","label":true})"
                       "\n");
  auto cohort = load_cohort(b.notes, b.labs, b.codes, b.labels);
  REQUIRE(cohort.patients.size() == 1);
  CHECK(cohort.patients[0].patient_id == "ghost");
  CHECK(cohort.patients[0].notes.empty());
  CHECK(cohort.patients[0].label == true);
}

TEST_CASE("schema errors carry file and line number") {
  Bundle b;
  SECTION("missing text field") {
    write_file(b.notes,
               note_row("p1", "n1", "ok") +
                   R"({"patient_id":"p1","note_id":"n2","department":"d","note_type":"t","date":"2019-01-01"})"
                   "\n");
    try {
      load_cohort(b.notes, b.labs, b.codes, b.labels);
      FAIL("expected data_error");
    } catch (const data_error& e) {
      std::string msg = e.what();
      CHECK(msg.find(":2") != std::string::npos);
      CHECK(msg.find("text") != std::string::npos);
    }
  }
  SECTION("malformed JSON line") {
    write_file(b.notes, note_row("p1", "n1", "ok") + "{not json\n");
    try {
      load_cohort(b.notes, b.labs, b.codes, b.labels);
      FAIL("expected data_error");
    } catch (const data_error& e) {
      CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
  }
  SECTION("duplicate note_id") {
    write_file(b.notes,
               note_row("p1", "n1", "a") + note_row("p2", "n1", "b"));
    CHECK_THROWS_AS(load_cohort(b.notes, b.labs, b.codes, b.labels),
                    data_error);
  }
  SECTION("whitespace-only note text") {
    write_file(b.notes, note_row("p1", "n1", "  \t "));
    CHECK_THROWS_AS(load_cohort(b.notes, b.labs, b.codes, b.labels),
                    data_error);
  }
  SECTION("code that does not match its system") {
    write_file(b.codes,
               R"({"patient_id":"p1","date":"2019-01-01","system":"ICD10","code":"583.81"})"
               "\n");
    CHECK_THROWS_AS(load_cohort(b.notes, b.labs, b.codes, b.labels),
                    data_error);
  }
  SECTION("bad date") {
    write_file(b.notes, note_row("p1", "n1", "ok", "2019-13-01"));
    CHECK_THROWS_AS(load_cohort(b.notes, b.labs, b.codes, b.labels),
                    data_error);
  }
}

TEST_CASE("encounter_count uses the explicit file when present") {
  Bundle b;
  write_file(b.notes, note_row("p1", "n1", "a", "2019-01-01") +
                          note_row("p1", "n2", "b", "2019-01-01") +
                          note_row("p1", "n3", "c", "2019-02-01"));
  auto derived = load_cohort(b.notes, b.labs, b.codes, b.labels);
  CHECK(derived.patients[0].encounter_count == 2);  // distinct dates

  auto enc = b.dir.file("encounters.jsonl");
  write_file(enc, R"({"patient_id":"p1","encounter_count":9})"
                  "\n");
  auto explicit_count = load_cohort(b.notes, b.labs, b.codes, b.labels, enc);
  CHECK(explicit_count.patients[0].encounter_count == 9);
}

TEST_CASE("filter_min_encounters keeps exactly the threshold and above") {
  Cohort cohort;
  for (int enc : {3, 4, 5}) {
    PatientRecord p;
    p.patient_id = "p" + std::to_string(enc);
    p.encounter_count = enc;
    cohort.patients.push_back(p);
  }
  auto filtered = filter_min_encounters(cohort, 4);
  REQUIRE(filtered.patients.size() == 2);
  CHECK(filtered.patients[0].encounter_count == 4);

  CHECK(filter_min_encounters(cohort, 0) == cohort);
  CHECK(filter_min_encounters(filtered, 4) == filtered);  // idempotent
}

namespace {

Cohort labeled_cohort(int n, int n_cases) {
  Cohort cohort;
  for (int i = 0; i < n; ++i) {
    PatientRecord p;
    char buf[8];
    std::snprintf(buf, sizeof(buf), "p%04d", i);
    p.patient_id = buf;
    p.label = i < n_cases;
    cohort.patients.push_back(p);
  }
  return cohort;
}

}  // namespace

TEST_CASE("split_cohort reproduces the 354/118 split at n=472") {
  auto cohort = labeled_cohort(472, 178);
  auto split = split_cohort(cohort, 0.75, true, 42);
  CHECK(split.train.patients.size() == 354);
  CHECK(split.test.patients.size() == 118);

  auto again = split_cohort(cohort, 0.75, true, 42);
  CHECK(split.train == again.train);
  CHECK(split.test == again.test);
}

TEST_CASE("stratified split balances cases") {
  auto cohort = labeled_cohort(10, 4);
  auto split = split_cohort(cohort, 0.5, true, 1);
  auto count_cases = [](const Cohort& c) {
    int n = 0;
    for (const auto& p : c.patients) n += *p.label ? 1 : 0;
    return n;
  };
  CHECK(split.train.patients.size() == 5);
  CHECK(count_cases(split.train) == 2);
  CHECK(count_cases(split.test) == 2);
}

TEST_CASE("split_cohort rejects unlabeled patients") {
  Cohort cohort = labeled_cohort(4, 2);
  cohort.patients[1].label.reset();
  CHECK_THROWS_AS(split_cohort(cohort, 0.5, true, 0), data_error);
}

TEST_CASE("split partition is disjoint and exhaustive for any seed/fraction") {
  auto cohort = labeled_cohort(37, 13);
  for (std::uint64_t seed : {0u, 1u, 2u, 3u, 4u}) {
    for (double fraction : {0.1, 0.25, 0.5, 0.75, 0.9}) {
      for (bool stratified : {false, true}) {
        auto split = split_cohort(cohort, fraction, stratified, seed);
        std::set<std::string> seen;
        for (const auto& p : split.train.patients) seen.insert(p.patient_id);
        for (const auto& p : split.test.patients) {
          CHECK(seen.count(p.patient_id) == 0);
          seen.insert(p.patient_id);
        }
        CHECK(seen.size() == cohort.patients.size());
        if (stratified) {
          // case prevalence within one patient of the cohort's
          double prev = 13.0 / 37.0;
          int train_cases = 0;
          for (const auto& p : split.train.patients) train_cases += *p.label;
          CHECK(std::abs(train_cases -
                         prev * double(split.train.patients.size())) <=
                1.0 + 1e-9);
        }
      }
    }
  }
}

TEST_CASE("cohort files round-trip") {
  auto cfg = default_synthetic_config();
  cfg.n_patients = 25;
  cfg.seed = 99;
  auto cohort = generate_synthetic_cohort(cfg);

  TempDir dir("roundtrip");
  auto notes = dir.file("notes.jsonl"), labs = dir.file("labs.jsonl"),
       codes = dir.file("codes.jsonl"), labels = dir.file("labels.jsonl"),
       enc = dir.file("encounters.jsonl");
  save_cohort(cohort, notes, labs, codes, labels, enc);
  auto loaded = load_cohort(notes, labs, codes, labels, enc);
  CHECK(loaded.patients == cohort.patients);

  // load -> serialize -> load is the identity
  TempDir dir2("roundtrip2");
  auto notes2 = dir2.file("notes.jsonl"), labs2 = dir2.file("labs.jsonl"),
       codes2 = dir2.file("codes.jsonl"), labels2 = dir2.file("labels.jsonl"),
       enc2 = dir2.file("encounters.jsonl");
  save_cohort(loaded, notes2, labs2, codes2, labels2, enc2);
  auto reloaded = load_cohort(notes2, labs2, codes2, labels2, enc2);
  CHECK(reloaded == loaded);
}

TEST_CASE("synthetic case count stays inside the binomial 99% interval") {
  auto cfg = default_synthetic_config();  // n=472, prevalence 0.377
  auto cohort = generate_synthetic_cohort(cfg);
  REQUIRE(cohort.patients.size() == 472);
  int cases = 0;
  for (const auto& p : cohort.patients) cases += *p.label ? 1 : 0;
  // normal approximation to the binomial: mean +/- 2.576 sd
  double mean = 472.0 * cfg.prevalence;
  double sd = std::sqrt(472.0 * cfg.prevalence * (1.0 - cfg.prevalence));
  CHECK(cases >= int(mean - 2.576 * sd));
  CHECK(cases <= int(mean + 2.576 * sd) + 1);
}

TEST_CASE("synthetic note-count mean tracks the configured mean") {
  auto cfg = default_synthetic_config();
  cfg.n_patients = 1500;
  cfg.seed = 7;
  auto cohort = generate_synthetic_cohort(cfg);
  double total = 0.0;
  for (const auto& p : cohort.patients) total += double(p.notes.size());
  double mean = total / double(cohort.patients.size());
  CHECK(mean > 0.9 * cfg.note_count_mean);
  CHECK(mean < 1.1 * cfg.note_count_mean);
  // the floor resists degenerate draws
  for (const auto& p : cohort.patients) CHECK(p.notes.size() >= 1);
}

TEST_CASE("synthetic generation is deterministic for a fixed seed") {
  auto cfg = default_synthetic_config();
  cfg.n_patients = 40;
  cfg.seed = 12345;
  auto a = generate_synthetic_cohort(cfg);
  auto b = generate_synthetic_cohort(cfg);
  CHECK(a == b);
}

TEST_CASE("synthetic cases lose proteinuria labs at the missing rate") {
  auto cfg = default_synthetic_config();
  cfg.n_patients = 1000;
  cfg.missing_lab_rate = 0.30;
  cfg.seed = 5;
  auto cohort = generate_synthetic_cohort(cfg);
  int cases = 0, with_proteinuria = 0;
  for (const auto& p : cohort.patients) {
    if (!*p.label) continue;
    ++cases;
    for (const auto& lab : p.labs)
      if (lab.name.find("rotein") != std::string::npos) {
        ++with_proteinuria;
        break;
      }
  }
  double frac_missing = 1.0 - double(with_proteinuria) / double(cases);
  CHECK(frac_missing > 0.22);
  CHECK(frac_missing < 0.38);
}
