#pragma once

#include <map>
#include <mutex>

#include "octad/eval.hpp"
#include "octad/explain.hpp"
#include "octad/model.hpp"

namespace octad::pipeline {

inline constexpr const char* kFormatVersions =
    "formats: tensor OCT1 v1, manifest v1, fold-plan v1";

// Documented fast profile for desk-scale runs: 64x64 inputs, 10 epochs,
// averaging from epoch 8, augmentation ranges scaled to the small extent.
void apply_fast_profile(Config& c);

// Everything an experiment needs, resolved from a merged Config
// (defaults <- fast preset <- config file <- CLI flags).
struct Settings {
  Config raw;
  RunConfig run;
  augment::Ranges aug;
  model::NetShape shape;
  double weight_decay = 0.01;

  phantom::PhantomSpec phantom_spec;
  phantom::CohortOptions cohort_opt;
  int n_ad_scans = 28;
  int n_cn_scans = 30;

  int crop_h = 512, crop_w = 512;

  cohort::CohortSpec cohort_spec;
  int n_runs = 5, n_outer = 5, n_inner = 3;
  std::vector<double> lr_grid = {1e-3, 1e-4, 2.7e-5};
  double rho = 0.25;  // n_test / n_train for the outer split
  double df = 4;      // n_runs - 1
  int parallel = 5;   // worker threads over (run, outer fold) tasks

  int explain_halfwidth = 42;
  double top_frac = 0.05;
  bool pooled_overlap = false;
  std::string model_name = "composite";

  static Settings resolve(const Config& merged);
};

std::string dirname_of(const std::string& path);

// Pipeline steps, each usable standalone from the CLI.
Manifest step_phantom(const Settings& s, const std::string& out_dir);
Manifest step_preprocess(const Settings& s, const Manifest& m, const std::string& manifest_dir,
                         const std::string& out_dir);
struct CohortOutputs {
  Manifest matched;
  cohort::FoldPlan plan;
  std::vector<std::string> warnings;
};
CohortOutputs step_cohort(const Settings& s, const Manifest& m);

std::vector<model::Sample> load_samples(const Manifest& m, const std::string& manifest_dir);

// Trainer over manifest rows backed by the CNN. Stores each outer fold's
// final parameters into *final_params (keyed by run*n_outer+outer) when
// given.
eval::TrainerFn make_model_trainer(const Settings& s, const std::vector<model::Sample>& samples,
                                   std::map<int, model::ParamSet<float>>* final_params = nullptr,
                                   std::mutex* params_mutex = nullptr);

struct ExplainOutputs {
  explain::ClassOverlapTable table;
  std::string rendered;
};

// Grad-CAM for every test scan of one run (its fold's own model), per-layer
// overlap accumulation and top-fraction aggregates. Writes saliency tensors
// under out_dir when non-empty. only_outer >= 0 restricts to one fold.
ExplainOutputs step_explain(const Settings& s, const std::vector<model::Sample>& samples,
                            const Manifest& manifest, const cohort::FoldPlan& plan, int run,
                            const std::map<int, model::ParamSet<float>>& final_params,
                            const std::string& out_dir, int only_outer = -1);

// Full experiment: phantom -> preprocess -> cohort/plan -> nested CV ->
// report -> explain. Writes report.txt, predictions.csv, overlaps.txt plus
// the intermediate directories under out_dir.
void run_all(const Settings& s, const std::string& out_dir);

}  // namespace octad::pipeline
