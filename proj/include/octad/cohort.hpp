#pragma once

#include <map>
#include <string>
#include <vector>

#include "octad/config.hpp"
#include "octad/manifest.hpp"
#include "octad/rng.hpp"

namespace octad::cohort {

struct CohortSpec {
  double year_cap = 4.0;
  int age_tolerance = 0;  // exact-first; escalates to at most 2 with warnings
  uint64_t match_seed = 0;

  static CohortSpec from_config(const Config& c);
};

// Keeps AD rows with years_to_diagnosis <= year_cap; controls pass through.
// Errors when no AD row survives.
Manifest select_ad(const Manifest& m, const CohortSpec& spec);

struct MatchResult {
  Manifest manifest;                  // AD rows + selected control rows
  std::vector<std::string> warnings;  // tolerance escalations
};

// For each AD subject picks a distinct control subject with equal sex and
// instance and |age difference| within the tolerance, escalating
// 0 -> 1 -> 2 before failing. Selection is uniform among eligible subjects.
MatchResult match_controls(const Manifest& m, const CohortSpec& spec, Rng& rng);

// Subject-level nested cross-validation plan: n_runs independent
// stratified splits into n_outer folds, plus an n_inner-fold split of each
// outer-training set. Scans of one subject never separate.
struct FoldPlan {
  int n_runs = 5;
  int n_outer = 5;
  int n_inner = 3;
  uint64_t seed_provenance = 0;  // seed the split was derived from

  struct Run {
    std::map<std::string, int> outer_of;                     // subject -> outer fold
    std::vector<std::map<std::string, int>> inner_of;        // [outer ctx][subject] -> inner fold
  };
  std::vector<Run> runs;

  std::string serialize() const;
  static FoldPlan parse(const std::string& text);
  static FoldPlan load(const std::string& path);
  void save(const std::string& path) const;
};

FoldPlan plan_folds(const Manifest& m, int n_runs, int n_outer, int n_inner, Rng& rng,
                    uint64_t seed_provenance = 0);

// Subject view of a manifest: rows grouped by subject_id with validated,
// consistent demographics.
struct Subject {
  std::string id;
  int age;
  Sex sex;
  int instance;
  Label label;
  std::vector<int> rows;  // indices into the manifest
};
std::vector<Subject> group_subjects(const Manifest& m);

}  // namespace octad::cohort
