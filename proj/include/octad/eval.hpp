#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "octad/cohort.hpp"
#include "octad/config.hpp"
#include "octad/manifest.hpp"

namespace octad::eval {

struct Prediction {
  std::string subject_id;
  Eye eye = Eye::L;
  int instance = 0;
  int run = 0;
  int outer_fold = 0;
  int label = 0;       // AD = 1
  double score = 0.0;  // probability of AD
};

// Mann-Whitney AUC: fraction of (AD, CN) pairs ranked correctly, ties 0.5.
// Computed by midrank summation; errors when only one class is present.
double auc(std::span<const Prediction> preds);

struct ThresholdMetrics {
  double f1 = 0, precision = 0, sensitivity = 0, specificity = 0;
  bool degenerate = false;  // some denominator was zero
};
ThresholdMetrics threshold_metrics(std::span<const Prediction> preds, double threshold = 0.5);

struct TTestResult {
  double t = 0;
  double p = 1;
  double df = 0;
  double rho = 0;  // variance correction, n_test/n_train
  bool degenerate = false;
};

// Paired t-test with resampling-dependence variance correction:
// t = mean(d) / sqrt((1/n + rho) * var(d)). rho = 0 recovers the standard
// paired test. Two-sided p from the Student-t distribution with `df`
// degrees of freedom.
TTestResult calibrated_t_test(std::span<const double> a, std::span<const double> b, double rho,
                              double df);

// Regularized incomplete beta by continued fraction; |error| < 1e-10.
double ibeta_reg(double a, double b, double x);
double student_t_two_sided_p(double t, double df);

struct RunMetrics {
  double auc = 0, f1 = 0, precision = 0, sensitivity = 0, specificity = 0;
};

struct MetricsReport {
  std::string model_name;
  std::vector<RunMetrics> per_run;
  std::vector<double> run_aucs() const;
  double mean_auc() const;
  double std_auc() const;  // sample std (n-1)
};

// A trainer builds a predictor from training rows. `inner` is the inner
// fold index or -1 for the final outer-fold model; `seed` is unique per
// training job.
struct TrainJob {
  std::vector<int> train_rows;
  double learning_rate = 0;
  int run = 0;
  int outer = 0;
  int inner = -1;
  uint64_t seed = 0;
};
using Predictor = std::function<double(int row)>;
using TrainerFn = std::function<Predictor(const TrainJob&)>;

struct NestedCvOptions {
  std::vector<double> lr_grid = {1e-3, 1e-4, 2.7e-5};
  uint64_t seed = 1;
  int n_threads = 1;
  double threshold = 0.5;
};

// One (run, outer fold) cell: picks the learning rate with the best mean
// inner-fold AUC (ties -> lowest lr), retrains on the whole outer-training
// set and scores the held-out fold without augmentation. Aborts on subject
// leakage.
struct FoldResult {
  std::vector<Prediction> preds;
  double chosen_lr = 0;
};
FoldResult run_fold(const cohort::FoldPlan& plan, const Manifest& manifest,
                    const TrainerFn& trainer, const NestedCvOptions& opt, int run, int outer);

// Full nested cross-validation over every (run, outer fold) cell; test
// predictions are pooled per run into one AUC.
MetricsReport run_nested_cv(const cohort::FoldPlan& plan, const Manifest& manifest,
                            const TrainerFn& trainer, const NestedCvOptions& opt,
                            std::vector<Prediction>* out_preds = nullptr,
                            std::vector<double>* chosen_lrs = nullptr);

std::string predictions_to_csv(std::span<const Prediction> preds);
std::vector<Prediction> predictions_from_csv(const std::string& text);

// Re-derives per-run pooled metrics from a prediction table.
MetricsReport report_from_predictions(std::span<const Prediction> preds, const std::string& name,
                                      double threshold = 0.5);

struct Comparison {
  std::string model_name;
  TTestResult standard;   // rho = 0
  TTestResult corrected;  // rho = n_test/n_train
};

// Fixed-width results table; the first report is the reference model and
// p-value columns appear only when there is something to compare against.
std::string render_report(std::span<const MetricsReport> reports,
                          std::span<const Comparison> comparisons);

}  // namespace octad::eval
