#include <doctest.h>

#include <set>

#include "octad/cohort.hpp"

using namespace octad;
using namespace octad::cohort;

namespace {

SubjectRecord row(const std::string& id, Eye eye, int age, Sex sex, int inst,
                  std::optional<double> years, const std::string& path = "x.oct1") {
  SubjectRecord r;
  r.subject_id = id;
  r.eye = eye;
  r.age = age;
  r.sex = sex;
  r.instance = inst;
  r.years_to_diagnosis = years;
  r.label = years ? Label::AD : Label::CN;
  r.image_path = path;
  return r;
}

Manifest single_eye_cohort(int n_ad, int n_cn) {
  Manifest m;
  for (int i = 0; i < n_ad; ++i)
    m.rows.push_back(row("A" + std::to_string(i), Eye::L, 60 + i % 20, Sex::F, 0, 2.0));
  for (int i = 0; i < n_cn; ++i)
    m.rows.push_back(row("C" + std::to_string(i), Eye::R, 60 + i % 20, Sex::F, 0, std::nullopt));
  return m;
}

}  // namespace

TEST_CASE("select_ad keeps cases at or below the year cap") {
  Manifest m;
  m.rows.push_back(row("A1", Eye::L, 70, Sex::F, 0, 2.0));
  m.rows.push_back(row("A2", Eye::L, 71, Sex::F, 0, 3.9));
  m.rows.push_back(row("A3", Eye::L, 72, Sex::F, 0, 4.0));
  m.rows.push_back(row("A4", Eye::L, 73, Sex::F, 0, 4.1));
  m.rows.push_back(row("C1", Eye::L, 70, Sex::F, 0, std::nullopt));
  CohortSpec spec;
  const Manifest out = select_ad(m, spec);
  std::set<std::string> kept;
  for (const SubjectRecord& r : out.rows)
    if (r.label == Label::AD) kept.insert(r.subject_id);
  CHECK(kept == std::set<std::string>{"A1", "A2", "A3"});

  // Controls pass through untouched.
  int n_cn = 0;
  for (const SubjectRecord& r : out.rows)
    if (r.label == Label::CN) ++n_cn;
  CHECK(n_cn == 1);
}

TEST_CASE("select_ad with an effectively unbounded cap keeps all cases") {
  Manifest m;
  m.rows.push_back(row("A1", Eye::L, 70, Sex::F, 0, 2.0));
  m.rows.push_back(row("A4", Eye::L, 73, Sex::F, 0, 40.0));
  CohortSpec spec;
  spec.year_cap = 1e18;
  CHECK(select_ad(m, spec).rows.size() == 2);
}

TEST_CASE("select_ad errors when no AD scan survives") {
  Manifest m;
  m.rows.push_back(row("C1", Eye::L, 70, Sex::F, 0, std::nullopt));
  CohortSpec spec;
  try {
    select_ad(m, spec);
    FAIL("expected empty-cohort error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::empty_cohort);
  }
}

TEST_CASE("match_controls picks the unique eligible control") {
  Manifest m;
  m.rows.push_back(row("A1", Eye::L, 70, Sex::F, 0, 1.0));
  m.rows.push_back(row("C1", Eye::L, 70, Sex::F, 0, std::nullopt));
  m.rows.push_back(row("C2", Eye::L, 70, Sex::M, 0, std::nullopt));
  m.rows.push_back(row("C3", Eye::L, 75, Sex::F, 0, std::nullopt));
  CohortSpec spec;
  Rng rng(1);
  const MatchResult res = match_controls(m, spec, rng);
  std::set<std::string> ids;
  for (const SubjectRecord& r : res.manifest.rows) ids.insert(r.subject_id);
  CHECK(ids == std::set<std::string>{"A1", "C1"});
  CHECK(res.warnings.empty());
}

TEST_CASE("match_controls errors when the control pool is empty") {
  Manifest m;
  m.rows.push_back(row("A1", Eye::L, 70, Sex::F, 0, 1.0));
  CohortSpec spec;
  Rng rng(1);
  try {
    match_controls(m, spec, rng);
    FAIL("expected unmatched-subject error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::unmatched_subject);
    CHECK(std::string(e.what()).find("A1") != std::string::npos);
  }
}

TEST_CASE("match_controls escalates age tolerance with a warning") {
  Manifest m;
  m.rows.push_back(row("A1", Eye::L, 70, Sex::F, 0, 1.0));
  m.rows.push_back(row("C1", Eye::L, 72, Sex::F, 0, std::nullopt));
  CohortSpec spec;  // tolerance starts at 0
  Rng rng(1);
  const MatchResult res = match_controls(m, spec, rng);
  REQUIRE(res.warnings.size() == 1);
  CHECK(res.warnings[0].find("A1") != std::string::npos);
  CHECK(res.manifest.rows.size() == 2);
}

TEST_CASE("different match seeds can pick different but always-valid controls") {
  Manifest m;
  m.rows.push_back(row("A1", Eye::L, 70, Sex::F, 0, 1.0));
  for (int i = 0; i < 6; ++i)
    m.rows.push_back(row("C" + std::to_string(i), Eye::L, 70, Sex::F, 0, std::nullopt));
  CohortSpec spec;
  std::set<std::string> picks;
  for (uint64_t seed = 0; seed < 8; ++seed) {
    Rng rng(seed);
    const MatchResult res = match_controls(m, spec, rng);
    REQUIRE(res.manifest.rows.size() == 2);
    const SubjectRecord& ctl = res.manifest.rows[1];
    CHECK(ctl.label == Label::CN);
    CHECK(ctl.age == 70);
    CHECK(ctl.sex == Sex::F);
    CHECK(ctl.instance == 0);
    picks.insert(ctl.subject_id);
  }
  CHECK(picks.size() > 1);
}

TEST_CASE("matched cohort balances per-stratum counts") {
  Manifest m;
  m.rows.push_back(row("A1", Eye::L, 70, Sex::F, 0, 1.0));
  m.rows.push_back(row("A2", Eye::L, 66, Sex::M, 1, 2.0));
  m.rows.push_back(row("A3", Eye::L, 61, Sex::M, 1, 3.0));
  for (int i = 0; i < 4; ++i) {
    m.rows.push_back(row("CF" + std::to_string(i), Eye::L, 70, Sex::F, 0, std::nullopt));
    m.rows.push_back(row("CM" + std::to_string(i), Eye::L, 66 - 5 * (i % 2), Sex::M, 1,
                         std::nullopt));
  }
  CohortSpec spec;
  Rng rng(3);
  const MatchResult res = match_controls(m, spec, rng);
  std::map<std::pair<Sex, int>, int> ad_count, cn_count;
  std::set<std::string> seen;
  for (const SubjectRecord& r : res.manifest.rows) {
    if (!seen.insert(r.subject_id).second) continue;
    auto key = std::make_pair(r.sex, r.instance);
    (r.label == Label::AD ? ad_count : cn_count)[key]++;
  }
  CHECK(ad_count == cn_count);
}

TEST_CASE("plan_folds: 10+10 single-eye subjects give 2+2 per outer fold") {
  const Manifest m = single_eye_cohort(10, 10);
  Rng rng(1);
  const FoldPlan plan = plan_folds(m, 5, 5, 3, rng);
  REQUIRE(plan.runs.size() == 5);
  for (const FoldPlan::Run& run : plan.runs) {
    std::array<int, 5> ad{}, cn{};
    for (const auto& [id, fold] : run.outer_of)
      (id[0] == 'A' ? ad : cn)[fold]++;
    for (int k = 0; k < 5; ++k) {
      CHECK(ad[k] == 2);
      CHECK(cn[k] == 2);
    }
  }
}

TEST_CASE("plan_folds keeps both eyes of a subject together in all instantiations") {
  Manifest m = single_eye_cohort(6, 6);
  m.rows.push_back(row("A0", Eye::R, 60, Sex::F, 0, 2.0, "y.oct1"));  // second eye of A0
  Rng rng(9);
  const FoldPlan plan = plan_folds(m, 5, 5, 3, rng);
  // Subject-level plan: a subject id has exactly one outer assignment per
  // run, so both its scans land together by construction. Check the plan is
  // exhaustive and unique per run.
  for (const FoldPlan::Run& run : plan.runs) {
    CHECK(run.outer_of.size() == 12);
    CHECK(run.outer_of.count("A0") == 1);
    for (int k = 0; k < 5; ++k) {
      // Every non-test subject has exactly one inner assignment.
      for (const auto& [id, fold] : run.outer_of)
        CHECK(run.inner_of[k].count(id) == (fold == k ? 0u : 1u));
    }
  }
}

TEST_CASE("plan_folds rejects too-few subjects") {
  const Manifest m = single_eye_cohort(2, 1);
  Rng rng(1);
  try {
    plan_folds(m, 5, 5, 3, rng);
    FAIL("expected infeasible-split error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::infeasible_split);
  }
}

TEST_CASE("plan_folds is invariant to manifest row order") {
  Manifest m = single_eye_cohort(8, 8);
  Manifest shuffled = m;
  Rng sh(42);
  sh.shuffle(shuffled.rows);
  Rng r1(77), r2(77);
  const FoldPlan a = plan_folds(m, 3, 4, 3, r1);
  const FoldPlan b = plan_folds(shuffled, 3, 4, 3, r2);
  CHECK(a.serialize() == b.serialize());
}

TEST_CASE("fold plan serialization round-trips") {
  const Manifest m = single_eye_cohort(7, 7);
  Rng rng(5);
  const FoldPlan plan = plan_folds(m, 2, 4, 3, rng, /*seed_provenance=*/12345);
  const FoldPlan back = FoldPlan::parse(plan.serialize());
  CHECK(back.serialize() == plan.serialize());
  CHECK(back.n_runs == 2);
  CHECK(back.n_outer == 4);
  CHECK(back.n_inner == 3);
  CHECK(back.seed_provenance == 12345);
}

TEST_CASE("no subject spans two outer folds in any run (property over random cohorts)") {
  Rng rng(2025);
  for (int trial = 0; trial < 20; ++trial) {
    const int n_ad = 5 + rng.next_int(10);
    const int n_cn = 5 + rng.next_int(10);
    const Manifest m = single_eye_cohort(n_ad, n_cn);
    Rng plan_rng(rng.next_u64());
    const FoldPlan plan = plan_folds(m, 5, 5, 3, plan_rng);
    for (const FoldPlan::Run& run : plan.runs) {
      CHECK(static_cast<int>(run.outer_of.size()) == n_ad + n_cn);
      for (int k = 0; k < 5; ++k) {
        // Inner folds partition the outer-training subjects.
        int inner_total = 0;
        for (const auto& [id, fold] : run.outer_of)
          if (fold != k) ++inner_total;
        CHECK(static_cast<int>(run.inner_of[k].size()) == inner_total);
      }
    }
  }
}

TEST_CASE("group_subjects rejects inconsistent demographics") {
  Manifest m;
  m.rows.push_back(row("A1", Eye::L, 70, Sex::F, 0, 1.0));
  m.rows.push_back(row("A1", Eye::R, 71, Sex::F, 0, 1.0, "z.oct1"));
  CHECK_THROWS_AS(group_subjects(m), Error);
}
