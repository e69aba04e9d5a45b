#include "octad/cohort.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace octad::cohort {

CohortSpec CohortSpec::from_config(const Config& c) {
  CohortSpec s;
  s.year_cap = c.get_f64("year_cap", s.year_cap);
  s.age_tolerance = static_cast<int>(c.get_i64("cohort.age_tolerance", s.age_tolerance));
  s.match_seed = static_cast<uint64_t>(
      c.get_i64("cohort.match_seed", static_cast<int64_t>(c.get_i64("seed", 0))));
  if (!(s.year_cap > 0)) throw Error(Errc::invalid_config, "year_cap must be > 0");
  if (s.age_tolerance < 0) throw Error(Errc::invalid_config, "age_tolerance must be >= 0");
  return s;
}

Manifest select_ad(const Manifest& m, const CohortSpec& spec) {
  Manifest out;
  int n_ad = 0;
  for (const SubjectRecord& r : m.rows) {
    if (r.label == Label::AD) {
      if (*r.years_to_diagnosis <= spec.year_cap) {
        out.rows.push_back(r);
        ++n_ad;
      }
    } else {
      out.rows.push_back(r);
    }
  }
  if (n_ad == 0) throw Error(Errc::empty_cohort, "no AD scans within the year cap");
  return out;
}

std::vector<Subject> group_subjects(const Manifest& m) {
  std::map<std::string, Subject> by_id;
  for (int i = 0; i < static_cast<int>(m.rows.size()); ++i) {
    const SubjectRecord& r = m.rows[i];
    auto [it, inserted] = by_id.try_emplace(r.subject_id);
    Subject& s = it->second;
    if (inserted) {
      s.id = r.subject_id;
      s.age = r.age;
      s.sex = r.sex;
      s.instance = r.instance;
      s.label = r.label;
    } else if (s.age != r.age || s.sex != r.sex || s.instance != r.instance ||
               s.label != r.label) {
      throw Error(Errc::bad_field, "subject " + r.subject_id + " has inconsistent rows");
    }
    s.rows.push_back(i);
  }
  std::vector<Subject> out;
  out.reserve(by_id.size());
  for (auto& [id, s] : by_id) out.push_back(std::move(s));  // map order = sorted by id
  return out;
}

MatchResult match_controls(const Manifest& m, const CohortSpec& spec, Rng& rng) {
  const std::vector<Subject> subjects = group_subjects(m);
  std::vector<const Subject*> ad, cn;
  for (const Subject& s : subjects)
    (s.label == Label::AD ? ad : cn).push_back(&s);
  if (ad.empty()) throw Error(Errc::empty_cohort, "no AD subjects to match");

  MatchResult result;
  std::set<const Subject*> used;
  std::vector<const Subject*> picked;
  for (const Subject* a : ad) {
    const Subject* chosen = nullptr;
    for (int tol = spec.age_tolerance; tol <= 2 && !chosen; ++tol) {
      std::vector<const Subject*> eligible;
      for (const Subject* c : cn)
        if (!used.count(c) && c->sex == a->sex && c->instance == a->instance &&
            std::abs(c->age - a->age) <= tol)
          eligible.push_back(c);
      if (!eligible.empty()) {
        chosen = eligible[static_cast<size_t>(rng.next_int(static_cast<int>(eligible.size())))];
        if (tol > spec.age_tolerance)
          result.warnings.push_back("subject " + a->id + ": age tolerance escalated to " +
                                    std::to_string(tol) + " years (control " + chosen->id + ")");
      }
    }
    if (!chosen)
      throw Error(Errc::unmatched_subject,
                  "no eligible control for subject " + a->id + " (sex " + to_string(a->sex) +
                      ", age " + std::to_string(a->age) + ", instance " +
                      std::to_string(a->instance) + ") within age tolerance 2");
    used.insert(chosen);
    picked.push_back(chosen);
  }

  for (const Subject* a : ad)
    for (int i : a->rows) result.manifest.rows.push_back(m.rows[i]);
  for (const Subject* c : picked)
    for (int i : c->rows) result.manifest.rows.push_back(m.rows[i]);
  return result;
}

namespace {

// Deal shuffled subjects round-robin so fold sizes differ by at most one.
void deal_folds(std::vector<const Subject*>& pool, int n_folds, Rng& rng,
                std::map<std::string, int>& assign) {
  rng.shuffle(pool);
  for (size_t i = 0; i < pool.size(); ++i)
    assign[pool[i]->id] = static_cast<int>(i % n_folds);
}

}  // namespace

FoldPlan plan_folds(const Manifest& m, int n_runs, int n_outer, int n_inner, Rng& rng,
                    uint64_t seed_provenance) {
  if (n_runs < 1 || n_outer < 2 || n_inner < 2)
    throw Error(Errc::invalid_argument, "need n_runs >= 1, n_outer >= 2, n_inner >= 2");
  const std::vector<Subject> subjects = group_subjects(m);  // canonical order by id
  std::vector<const Subject*> ad, cn;
  for (const Subject& s : subjects)
    (s.label == Label::AD ? ad : cn).push_back(&s);
  if (static_cast<int>(ad.size()) < n_outer || static_cast<int>(cn.size()) < n_outer)
    throw Error(Errc::infeasible_split,
                "need at least " + std::to_string(n_outer) + " subjects per class, have " +
                    std::to_string(ad.size()) + " AD / " + std::to_string(cn.size()) + " CN");

  FoldPlan plan;
  plan.n_runs = n_runs;
  plan.n_outer = n_outer;
  plan.n_inner = n_inner;
  plan.seed_provenance = seed_provenance;
  plan.runs.resize(n_runs);
  for (int run = 0; run < n_runs; ++run) {
    Rng run_rng = rng.fork(static_cast<uint64_t>(run));
    FoldPlan::Run& R = plan.runs[run];
    std::vector<const Subject*> ad_pool = ad, cn_pool = cn;
    deal_folds(ad_pool, n_outer, run_rng, R.outer_of);
    deal_folds(cn_pool, n_outer, run_rng, R.outer_of);

    R.inner_of.resize(n_outer);
    for (int k = 0; k < n_outer; ++k) {
      std::vector<const Subject*> ad_train, cn_train;
      for (const Subject* s : ad)
        if (R.outer_of.at(s->id) != k) ad_train.push_back(s);
      for (const Subject* s : cn)
        if (R.outer_of.at(s->id) != k) cn_train.push_back(s);
      if (static_cast<int>(ad_train.size()) < n_inner ||
          static_cast<int>(cn_train.size()) < n_inner)
        throw Error(Errc::infeasible_split, "outer-training set too small for inner folds");
      deal_folds(ad_train, n_inner, run_rng, R.inner_of[k]);
      deal_folds(cn_train, n_inner, run_rng, R.inner_of[k]);
    }
  }
  return plan;
}

std::string FoldPlan::serialize() const {
  std::ostringstream out;
  out << "# fold-plan v1: run,outer_fold,subject_id,assignment\n";
  out << "runs=" << n_runs << " outer=" << n_outer << " inner=" << n_inner << " seed="
      << seed_provenance << '\n';
  for (int run = 0; run < n_runs; ++run) {
    const Run& R = runs[run];
    for (int k = 0; k < n_outer; ++k) {
      for (const auto& [id, fold] : R.outer_of) {
        out << run << ',' << k << ',' << id << ',';
        if (fold == k) out << "TEST";
        else out << R.inner_of[k].at(id);
        out << '\n';
      }
    }
  }
  return out.str();
}

FoldPlan FoldPlan::parse(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  FoldPlan plan;
  plan.runs.clear();
  bool have_dims = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!have_dims) {
      unsigned long long seed = 0;
      if (std::sscanf(line.c_str(), "runs=%d outer=%d inner=%d seed=%llu", &plan.n_runs,
                      &plan.n_outer, &plan.n_inner, &seed) != 4)
        throw Error(Errc::bad_field, "fold plan: bad dimension line '" + line + "'");
      plan.seed_provenance = seed;
      if (plan.n_runs < 1 || plan.n_outer < 2 || plan.n_inner < 2)
        throw Error(Errc::bad_field, "fold plan: bad dimensions");
      plan.runs.resize(plan.n_runs);
      for (Run& r : plan.runs) r.inner_of.resize(plan.n_outer);
      have_dims = true;
      continue;
    }
    std::istringstream ls(line);
    std::string run_s, outer_s, id, assign;
    if (!std::getline(ls, run_s, ',') || !std::getline(ls, outer_s, ',') ||
        !std::getline(ls, id, ',') || !std::getline(ls, assign))
      throw Error(Errc::bad_field, "fold plan: bad line '" + line + "'");
    const int run = std::stoi(run_s), outer = std::stoi(outer_s);
    if (run < 0 || run >= plan.n_runs || outer < 0 || outer >= plan.n_outer)
      throw Error(Errc::bad_field, "fold plan: run/outer out of range in '" + line + "'");
    Run& R = plan.runs[run];
    if (assign == "TEST") {
      auto it = R.outer_of.find(id);
      if (it != R.outer_of.end() && it->second != outer)
        throw Error(Errc::bad_field, "fold plan: subject " + id + " in two outer folds");
      R.outer_of[id] = outer;
    } else {
      const int inner = std::stoi(assign);
      if (inner < 0 || inner >= plan.n_inner)
        throw Error(Errc::bad_field, "fold plan: inner fold out of range in '" + line + "'");
      R.inner_of[outer][id] = inner;
    }
  }
  if (!have_dims) throw Error(Errc::bad_field, "fold plan: missing dimension line");
  return plan;
}

FoldPlan FoldPlan::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(Errc::io_failure, "cannot open fold plan: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

void FoldPlan::save(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(Errc::io_failure, "cannot write fold plan: " + path);
  f << serialize();
}

}  // namespace octad::cohort
