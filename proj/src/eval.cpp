#include "octad/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace octad::eval {

double auc(std::span<const Prediction> preds) {
  const size_t n = preds.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return preds[a].score < preds[b].score; });

  // Midranks (ties share the average rank), then the rank-sum statistic.
  std::vector<double> rank(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && preds[order[j + 1]].score == preds[order[i]].score) ++j;
    const double mid = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double rank_sum_pos = 0;
  long n_pos = 0, n_neg = 0;
  for (size_t k = 0; k < n; ++k) {
    if (preds[k].label == 1) {
      rank_sum_pos += rank[k];
      ++n_pos;
    } else {
      ++n_neg;
    }
  }
  if (n_pos == 0 || n_neg == 0)
    throw Error(Errc::single_class, "AUC needs both classes present");
  const double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

ThresholdMetrics threshold_metrics(std::span<const Prediction> preds, double threshold) {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  for (const Prediction& p : preds) {
    const bool pred_ad = p.score >= threshold;
    if (p.label == 1) (pred_ad ? tp : fn)++;
    else (pred_ad ? fp : tn)++;
  }
  if (tp + fn == 0 || tn + fp == 0)
    throw Error(Errc::single_class, "metrics need both classes present");
  ThresholdMetrics m;
  const auto ratio = [&m](long num, long den) {
    if (den == 0) {
      m.degenerate = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  m.precision = ratio(tp, tp + fp);
  m.sensitivity = ratio(tp, tp + fn);
  m.specificity = ratio(tn, tn + fp);
  m.f1 = ratio(2 * tp, 2 * tp + fp + fn);
  return m;
}

namespace {

// Continued fraction for the regularized incomplete beta (Lentz's method).
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double ibeta_reg(double a, double b, double x) {
  if (!(a > 0) || !(b > 0)) throw Error(Errc::invalid_argument, "ibeta needs a,b > 0");
  if (x <= 0) return 0.0;
  if (x >= 1) return 1.0;
  const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                       a * std::log(x) + b * std::log1p(-x);
  const double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0)) throw Error(Errc::invalid_argument, "df must be > 0");
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return ibeta_reg(df / 2.0, 0.5, x);
}

TTestResult calibrated_t_test(std::span<const double> a, std::span<const double> b, double rho,
                              double df) {
  if (a.size() != b.size() || a.size() < 2)
    throw Error(Errc::invalid_argument, "paired samples of equal length >= 2 required");
  if (rho < 0) throw Error(Errc::invalid_argument, "rho must be >= 0");
  const size_t n = a.size();
  std::vector<double> d(n);
  for (size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  double mean = 0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(n);
  double var = 0;
  for (double v : d) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n - 1);

  TTestResult r;
  r.rho = rho;
  r.df = df;
  if (var == 0) {
    r.degenerate = true;
    if (mean == 0) {
      r.t = 0;
      r.p = 1;
    } else {
      r.t = mean > 0 ? std::numeric_limits<double>::infinity()
                     : -std::numeric_limits<double>::infinity();
      r.p = 0;
    }
    return r;
  }
  r.t = mean / std::sqrt((1.0 / static_cast<double>(n) + rho) * var);
  r.p = student_t_two_sided_p(r.t, df);
  return r;
}

std::vector<double> MetricsReport::run_aucs() const {
  std::vector<double> out;
  for (const RunMetrics& r : per_run) out.push_back(r.auc);
  return out;
}

double MetricsReport::mean_auc() const {
  double s = 0;
  for (const RunMetrics& r : per_run) s += r.auc;
  return per_run.empty() ? 0 : s / static_cast<double>(per_run.size());
}

double MetricsReport::std_auc() const {
  if (per_run.size() < 2) return 0;
  const double m = mean_auc();
  double s = 0;
  for (const RunMetrics& r : per_run) s += (r.auc - m) * (r.auc - m);
  return std::sqrt(s / static_cast<double>(per_run.size() - 1));
}

namespace {

struct FoldTask {
  int run = 0;
  int outer = 0;
};

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0 : s / static_cast<double>(v.size());
}

}  // namespace

FoldResult run_fold(const cohort::FoldPlan& plan, const Manifest& manifest,
                    const TrainerFn& trainer, const NestedCvOptions& opt, int run, int outer) {
  if (opt.lr_grid.empty()) throw Error(Errc::invalid_argument, "empty learning-rate grid");
  if (run < 0 || run >= static_cast<int>(plan.runs.size()) || outer < 0 ||
      outer >= plan.n_outer)
    throw Error(Errc::invalid_argument, "run/outer out of range");

  std::map<std::string, std::vector<int>> rows_of;
  for (int i = 0; i < static_cast<int>(manifest.rows.size()); ++i)
    rows_of[manifest.rows[i].subject_id].push_back(i);
  const cohort::FoldPlan::Run& R = plan.runs[run];
  for (const auto& [id, fold] : R.outer_of)
    if (!rows_of.count(id))
      throw Error(Errc::invalid_argument, "plan subject " + id + " not in manifest");

  // Training membership comes from the planned inner partition, test
  // membership from the outer assignment; the two must be disjoint and
  // together cover the run's subjects.
  std::vector<std::string> test_subjects;
  for (const auto& [id, fold] : R.outer_of)
    if (fold == outer) test_subjects.push_back(id);
  std::vector<std::string> train_subjects;
  for (const auto& [id, inner] : R.inner_of[outer]) train_subjects.push_back(id);
  if (train_subjects.empty() || test_subjects.empty())
    throw Error(Errc::infeasible_split, "empty outer fold");

  // Leakage guard: a test subject must never reach a training set.
  std::set<std::string> test_set(test_subjects.begin(), test_subjects.end());
  for (const std::string& id : train_subjects)
    if (test_set.count(id))
      throw Error(Errc::leakage, "subject " + id + " in both training and test");
  if (train_subjects.size() + test_subjects.size() != R.outer_of.size())
    throw Error(Errc::invalid_argument, "inner folds do not partition the outer-training set");

  const auto rows_for = [&](const std::vector<std::string>& ids) {
    std::vector<int> rows;
    for (const std::string& id : ids)
      for (int r : rows_of.at(id)) rows.push_back(r);
    std::sort(rows.begin(), rows.end());
    return rows;
  };

  // Inner selection: mean inner-fold AUC per learning rate.
  const std::map<std::string, int>& inner_of = R.inner_of[outer];
  double best_lr = opt.lr_grid[0];
  double best_auc = -1;
  for (size_t li = 0; li < opt.lr_grid.size(); ++li) {
    const double lr = opt.lr_grid[li];
    std::vector<double> inner_aucs;
    for (int inner = 0; inner < plan.n_inner; ++inner) {
      std::vector<std::string> tr, va;
      for (const std::string& id : train_subjects) {
        auto it = inner_of.find(id);
        if (it == inner_of.end())
          throw Error(Errc::invalid_argument, "subject " + id + " missing from inner folds");
        (it->second == inner ? va : tr).push_back(id);
      }
      TrainJob job;
      job.train_rows = rows_for(tr);
      job.learning_rate = lr;
      job.run = run;
      job.outer = outer;
      job.inner = inner;
      job.seed = Rng::mix(opt.seed ^ (0x11000u + 1000u * run + 100u * outer + 10u * inner + li));
      Predictor pred = trainer(job);
      std::vector<Prediction> val_preds;
      for (const std::string& id : va)
        for (int r : rows_of.at(id)) {
          Prediction p;
          p.subject_id = id;
          p.eye = manifest.rows[r].eye;
          p.instance = manifest.rows[r].instance;
          p.label = manifest.rows[r].label == Label::AD ? 1 : 0;
          p.score = pred(r);
          val_preds.push_back(p);
        }
      inner_aucs.push_back(auc(val_preds));
    }
    const double mean_auc = mean_of(inner_aucs);
    if (mean_auc > best_auc || (mean_auc == best_auc && lr < best_lr)) {
      best_auc = mean_auc;
      best_lr = lr;  // tie -> most conservative (lowest) learning rate
    }
  }

  // Final model on the full outer-training set; score the held-out fold
  // without augmentation (the trainer's predictor runs in eval mode).
  TrainJob job;
  job.train_rows = rows_for(train_subjects);
  job.learning_rate = best_lr;
  job.run = run;
  job.outer = outer;
  job.inner = -1;
  job.seed = Rng::mix(opt.seed ^ (0x22000u + 1000u * run + 100u * outer));
  Predictor pred = trainer(job);

  FoldResult result;
  result.chosen_lr = best_lr;
  std::sort(test_subjects.begin(), test_subjects.end());
  for (const std::string& id : test_subjects)
    for (int r : rows_of.at(id)) {
      Prediction p;
      p.subject_id = id;
      p.eye = manifest.rows[r].eye;
      p.instance = manifest.rows[r].instance;
      p.run = run;
      p.outer_fold = outer;
      p.label = manifest.rows[r].label == Label::AD ? 1 : 0;
      p.score = pred(r);
      result.preds.push_back(p);
    }
  return result;
}

MetricsReport run_nested_cv(const cohort::FoldPlan& plan, const Manifest& manifest,
                            const TrainerFn& trainer, const NestedCvOptions& opt,
                            std::vector<Prediction>* out_preds, std::vector<double>* chosen_lrs) {
  if (opt.lr_grid.empty()) throw Error(Errc::invalid_argument, "empty learning-rate grid");
  if (static_cast<int>(plan.runs.size()) != plan.n_runs)
    throw Error(Errc::invalid_argument, "fold plan runs/n_runs mismatch");

  std::vector<FoldTask> tasks;
  for (int run = 0; run < plan.n_runs; ++run)
    for (int outer = 0; outer < plan.n_outer; ++outer)
      tasks.push_back({run, outer});

  std::vector<std::vector<Prediction>> fold_preds(tasks.size());
  std::vector<double> fold_lr(tasks.size(), 0.0);
  std::vector<std::exception_ptr> fold_exc(tasks.size());

  const auto run_task = [&](size_t task_idx) {
    FoldResult r =
        run_fold(plan, manifest, trainer, opt, tasks[task_idx].run, tasks[task_idx].outer);
    fold_preds[task_idx] = std::move(r.preds);
    fold_lr[task_idx] = r.chosen_lr;
  };

  const int n_threads = std::max(1, opt.n_threads);
  if (n_threads == 1) {
    for (size_t i = 0; i < tasks.size(); ++i) run_task(i);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t)
      pool.emplace_back([&] {
        for (;;) {
          const size_t i = next.fetch_add(1);
          if (i >= tasks.size()) return;
          try {
            run_task(i);
          } catch (...) {
            fold_exc[i] = std::current_exception();
          }
        }
      });
    for (std::thread& t : pool) t.join();
    for (const std::exception_ptr& e : fold_exc)
      if (e) std::rethrow_exception(e);
  }

  // Deterministic assembly in (run, outer) order.
  MetricsReport report;
  std::vector<Prediction> all;
  for (int run = 0; run < plan.n_runs; ++run) {
    std::vector<Prediction> run_preds;
    for (size_t i = 0; i < tasks.size(); ++i)
      if (tasks[i].run == run)
        run_preds.insert(run_preds.end(), fold_preds[i].begin(), fold_preds[i].end());
    RunMetrics rm;
    rm.auc = auc(run_preds);
    const ThresholdMetrics tm = threshold_metrics(run_preds, opt.threshold);
    rm.f1 = tm.f1;
    rm.precision = tm.precision;
    rm.sensitivity = tm.sensitivity;
    rm.specificity = tm.specificity;
    report.per_run.push_back(rm);
    all.insert(all.end(), run_preds.begin(), run_preds.end());
  }
  if (out_preds) *out_preds = std::move(all);
  if (chosen_lrs) *chosen_lrs = fold_lr;
  return report;
}

std::string predictions_to_csv(std::span<const Prediction> preds) {
  std::ostringstream out;
  out << "run,outer_fold,subject_id,eye,instance,label,score\n";
  char buf[32];
  for (const Prediction& p : preds) {
    std::snprintf(buf, sizeof(buf), "%.6f", p.score);
    out << p.run << ',' << p.outer_fold << ',' << p.subject_id << ',' << to_string(p.eye) << ','
        << p.instance << ',' << p.label << ',' << buf << '\n';
  }
  return out.str();
}

std::vector<Prediction> predictions_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::bad_field, "empty predictions csv");
  std::vector<Prediction> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string run_s, fold_s, id, eye_s, inst_s, label_s, score_s;
    if (!std::getline(ls, run_s, ',') || !std::getline(ls, fold_s, ',') ||
        !std::getline(ls, id, ',') || !std::getline(ls, eye_s, ',') ||
        !std::getline(ls, inst_s, ',') || !std::getline(ls, label_s, ',') ||
        !std::getline(ls, score_s))
      throw Error(Errc::bad_field, "bad prediction line: '" + line + "'");
    Prediction p;
    p.run = std::stoi(run_s);
    p.outer_fold = std::stoi(fold_s);
    p.subject_id = id;
    p.eye = eye_s == "L" ? Eye::L : Eye::R;
    p.instance = std::stoi(inst_s);
    p.label = std::stoi(label_s);
    p.score = std::stod(score_s);
    out.push_back(std::move(p));
  }
  return out;
}

MetricsReport report_from_predictions(std::span<const Prediction> preds, const std::string& name,
                                      double threshold) {
  int max_run = -1;
  for (const Prediction& p : preds) max_run = std::max(max_run, p.run);
  if (max_run < 0) throw Error(Errc::invalid_argument, "no predictions");
  MetricsReport report;
  report.model_name = name;
  for (int run = 0; run <= max_run; ++run) {
    std::vector<Prediction> run_preds;
    for (const Prediction& p : preds)
      if (p.run == run) run_preds.push_back(p);
    RunMetrics rm;
    rm.auc = auc(run_preds);
    const ThresholdMetrics tm = threshold_metrics(run_preds, threshold);
    rm.f1 = tm.f1;
    rm.precision = tm.precision;
    rm.sensitivity = tm.sensitivity;
    rm.specificity = tm.specificity;
    report.per_run.push_back(rm);
  }
  return report;
}

namespace {

struct MeanStd {
  double mean = 0, sd = 0;
};

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd out;
  if (v.empty()) return out;
  for (double x : v) out.mean += x;
  out.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double s = 0;
    for (double x : v) s += (x - out.mean) * (x - out.mean);
    out.sd = std::sqrt(s / static_cast<double>(v.size() - 1));
  }
  return out;
}

std::string fmt_pm(const MeanStd& m) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.3f +- %.3f", m.mean, m.sd);
  return buf;
}

}  // namespace

std::string render_report(std::span<const MetricsReport> reports,
                          std::span<const Comparison> comparisons) {
  if (reports.empty()) throw Error(Errc::invalid_argument, "nothing to report");
  const bool with_p = reports.size() > 1;

  std::ostringstream out;
  char line[256];
  if (with_p) {
    std::snprintf(line, sizeof(line), "%-14s %-16s %-16s %-16s %-16s %-16s %-10s %-10s\n", "Model",
                  "mAUC", "f1-score", "Precision", "Sensitivity", "Specificity", "p", "corr. p");
  } else {
    std::snprintf(line, sizeof(line), "%-14s %-16s %-16s %-16s %-16s %-16s\n", "Model", "mAUC",
                  "f1-score", "Precision", "Sensitivity", "Specificity");
  }
  out << line;

  for (size_t i = 0; i < reports.size(); ++i) {
    const MetricsReport& r = reports[i];
    std::vector<double> aucs, f1s, precs, sens, specs;
    for (const RunMetrics& m : r.per_run) {
      aucs.push_back(m.auc);
      f1s.push_back(m.f1);
      precs.push_back(m.precision);
      sens.push_back(m.sensitivity);
      specs.push_back(m.specificity);
    }
    std::string p_col = "", cp_col = "";
    if (with_p && i > 0) {
      const Comparison* cmp = nullptr;
      for (const Comparison& c : comparisons)
        if (c.model_name == r.model_name) cmp = &c;
      if (cmp) {
        char b1[16], b2[16];
        std::snprintf(b1, sizeof(b1), "%.4f", cmp->standard.p);
        std::snprintf(b2, sizeof(b2), "%.4f", cmp->corrected.p);
        p_col = b1;
        cp_col = b2;
      }
    }
    if (with_p) {
      std::snprintf(line, sizeof(line), "%-14s %-16s %-16s %-16s %-16s %-16s %-10s %-10s\n",
                    r.model_name.c_str(), fmt_pm(mean_std(aucs)).c_str(),
                    fmt_pm(mean_std(f1s)).c_str(), fmt_pm(mean_std(precs)).c_str(),
                    fmt_pm(mean_std(sens)).c_str(), fmt_pm(mean_std(specs)).c_str(), p_col.c_str(),
                    cp_col.c_str());
    } else {
      std::snprintf(line, sizeof(line), "%-14s %-16s %-16s %-16s %-16s %-16s\n",
                    r.model_name.c_str(), fmt_pm(mean_std(aucs)).c_str(),
                    fmt_pm(mean_std(f1s)).c_str(), fmt_pm(mean_std(precs)).c_str(),
                    fmt_pm(mean_std(sens)).c_str(), fmt_pm(mean_std(specs)).c_str());
    }
    out << line;
  }
  return out.str();
}

}  // namespace octad::eval
