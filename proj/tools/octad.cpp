// octad: desk-scale retinal OCT classification pipeline.
//
// Subcommands cover each stage (phantom, preprocess, cohort, train,
// evaluate, compare, explain, report) plus run-all, which chains the whole
// experiment into one deterministic run.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "octad/pipeline.hpp"

namespace {

using namespace octad;

struct CommonFlags {
  std::string config_path;
  bool fast = false;
  int64_t seed = -1;
  std::string mode;
  double tau = -1;
  std::string grid;
  int parallel = -1;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "key=value config file");
  cmd->add_flag("--fast", f.fast, "apply the documented fast profile before the config file");
  cmd->add_option("--seed", f.seed, "override the run seed");
  cmd->add_option("--mode", f.mode, "channel mode: composite|raw3|mask3|contour3");
  cmd->add_option("--tau", f.tau, "saliency threshold in [0,1]");
  cmd->add_option("--grid", f.grid, "comma-separated learning-rate grid");
  cmd->add_option("--parallel", f.parallel, "worker threads over (run, fold) tasks");
}

pipeline::Settings resolve_settings(const CommonFlags& f) {
  Config merged;
  if (f.fast) pipeline::apply_fast_profile(merged);
  if (!f.config_path.empty()) merged.merge_from(Config::load(f.config_path));
  if (f.seed >= 0) merged.set_i64("seed", f.seed);
  if (!f.mode.empty()) merged.set("channel_mode", f.mode);
  if (f.tau >= 0) merged.set_f64("threshold_saliency", f.tau);
  if (!f.grid.empty()) merged.set("eval.grid", f.grid);
  if (f.parallel > 0) merged.set_i64("eval.parallel", f.parallel);
  return pipeline::Settings::resolve(merged);
}

void log_header(const pipeline::Settings& s) {
  std::cerr << "seed=" << s.run.seed << '\n' << pipeline::kFormatVersions << '\n';
  std::cerr << "config:\n" << s.raw.serialize();
}

int cmd_phantom(const CommonFlags& f, const std::string& out) {
  const pipeline::Settings s = resolve_settings(f);
  log_header(s);
  const Manifest m = pipeline::step_phantom(s, out);
  std::cerr << "wrote " << m.rows.size() << " scans under " << out << '\n';
  return 0;
}

int cmd_preprocess(const CommonFlags& f, const std::string& manifest_path,
                   const std::string& out) {
  const pipeline::Settings s = resolve_settings(f);
  log_header(s);
  const Manifest m = Manifest::load(manifest_path);
  pipeline::step_preprocess(s, m, pipeline::dirname_of(manifest_path), out);
  std::cerr << "wrote " << m.rows.size() << " composites under " << out << '\n';
  return 0;
}

int cmd_cohort(const CommonFlags& f, const std::string& manifest_path, const std::string& out) {
  const pipeline::Settings s = resolve_settings(f);
  log_header(s);
  const Manifest m = Manifest::load(manifest_path);
  pipeline::CohortOutputs c = pipeline::step_cohort(s, m);
  for (const std::string& w : c.warnings) std::cerr << "match warning: " << w << '\n';
  c.plan.save(out);
  std::filesystem::path matched(out);
  matched.replace_extension(".matched.csv");
  c.matched.save(matched.string());
  std::cerr << "plan -> " << out << ", matched manifest -> " << matched.string() << '\n';
  return 0;
}

int cmd_train(const CommonFlags& f, const std::string& plan_path,
              const std::string& manifest_path, int run, int outer, const std::string& out) {
  const pipeline::Settings s = resolve_settings(f);
  log_header(s);
  const Manifest m = Manifest::load(manifest_path);
  const cohort::FoldPlan plan = cohort::FoldPlan::load(plan_path);
  if (run < 0 || run >= plan.n_runs || outer < 0 || outer >= plan.n_outer)
    throw Error(Errc::invalid_argument, "--run/--outer out of range for the plan");
  const std::vector<model::Sample> samples =
      pipeline::load_samples(m, pipeline::dirname_of(manifest_path));

  std::map<int, model::ParamSet<float>> final_params;
  std::mutex mu;
  eval::TrainerFn trainer = pipeline::make_model_trainer(s, samples, &final_params, &mu);

  eval::NestedCvOptions opt;
  opt.lr_grid = s.lr_grid;
  opt.seed = s.run.seed;
  const eval::FoldResult result = eval::run_fold(plan, m, trainer, opt, run, outer);

  model::save_params(out, final_params.at(run * plan.n_outer + outer));
  std::cerr << "fold (" << run << "," << outer << ") lr=" << result.chosen_lr << " params -> "
            << out << '\n';
  return 0;
}

int cmd_evaluate(const CommonFlags& f, const std::string& plan_path,
                 const std::string& manifest_path, const std::string& out) {
  const pipeline::Settings s = resolve_settings(f);
  log_header(s);
  const Manifest m = Manifest::load(manifest_path);
  const cohort::FoldPlan plan = cohort::FoldPlan::load(plan_path);
  const std::vector<model::Sample> samples =
      pipeline::load_samples(m, pipeline::dirname_of(manifest_path));
  eval::TrainerFn trainer = pipeline::make_model_trainer(s, samples);

  eval::NestedCvOptions opt;
  opt.lr_grid = s.lr_grid;
  opt.seed = s.run.seed;
  opt.n_threads = s.parallel;
  std::vector<eval::Prediction> preds;
  eval::MetricsReport report = eval::run_nested_cv(plan, m, trainer, opt, &preds);
  report.model_name = s.model_name;

  std::filesystem::create_directories(out);
  std::ofstream pf(out + "/predictions.csv", std::ios::trunc);
  pf << eval::predictions_to_csv(preds);
  std::ofstream rf(out + "/report.txt", std::ios::trunc);
  rf << eval::render_report(std::span(&report, 1), {});
  std::cerr << "mAUC=" << report.mean_auc() << " +- " << report.std_auc() << '\n';
  return 0;
}

std::string load_text(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(Errc::io_failure, "cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int render_report_files(const CommonFlags& f, const std::vector<std::string>& report_paths,
                        const std::string& out) {
  const pipeline::Settings s = resolve_settings(f);
  log_header(s);
  std::vector<eval::MetricsReport> reports;
  for (const std::string& path : report_paths) {
    auto preds = eval::predictions_from_csv(load_text(path));
    std::string name = std::filesystem::path(path).stem().string();
    reports.push_back(eval::report_from_predictions(preds, name));
  }
  std::vector<eval::Comparison> comparisons;
  const std::vector<double> ref = reports[0].run_aucs();
  for (size_t i = 1; i < reports.size(); ++i) {
    eval::Comparison c;
    c.model_name = reports[i].model_name;
    const std::vector<double> other = reports[i].run_aucs();
    c.standard = eval::calibrated_t_test(ref, other, 0.0, s.df);
    c.corrected = eval::calibrated_t_test(ref, other, s.rho, s.df);
    comparisons.push_back(c);
  }
  const std::string table = eval::render_report(reports, comparisons);
  if (out.empty()) {
    std::cout << table;
  } else {
    std::ofstream f_out(out, std::ios::trunc);
    f_out << table;
  }
  return 0;
}

int cmd_compare(const CommonFlags& f, const std::vector<std::string>& report_paths,
                const std::string& out) {
  if (report_paths.size() < 2)
    throw Error(Errc::invalid_argument, "compare needs two prediction CSVs");
  return render_report_files(f, report_paths, out);
}

int cmd_explain(const CommonFlags& f, const std::string& params_dir,
                const std::string& manifest_path, const std::string& plan_path, int run, int outer,
                const std::string& out) {
  const pipeline::Settings s = resolve_settings(f);
  log_header(s);
  const Manifest m = Manifest::load(manifest_path);
  const cohort::FoldPlan plan = cohort::FoldPlan::load(plan_path);
  const std::vector<model::Sample> samples =
      pipeline::load_samples(m, pipeline::dirname_of(manifest_path));

  // One params bundle; restricted to its own fold's test scans when --outer
  // is given, otherwise reused across every fold of the run.
  std::map<int, model::ParamSet<float>> final_params;
  const model::ParamSet<float> params = model::load_params(params_dir);
  for (int k = 0; k < plan.n_outer; ++k) final_params[run * plan.n_outer + k] = params;
  pipeline::ExplainOutputs ex =
      pipeline::step_explain(s, samples, m, plan, run, final_params, out, outer);
  std::cout << ex.rendered;
  return 0;
}

int cmd_report(const CommonFlags& f, const std::vector<std::string>& report_paths,
               const std::string& out) {
  return render_report_files(f, report_paths, out);
}

int cmd_run_all(const CommonFlags& f, const std::string& out) {
  const pipeline::Settings s = resolve_settings(f);
  pipeline::run_all(s, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"octad: OCT B-scan classification experiment pipeline"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string manifest_path, plan_path, params_dir, out;
  std::vector<std::string> report_paths;
  int run = 0, outer = -1;

  CLI::App* phantom = app.add_subcommand("phantom", "generate a synthetic scan cohort");
  add_common(phantom, flags);
  phantom->add_option("--out", out, "output directory")->required();

  CLI::App* preprocess = app.add_subcommand("preprocess", "build 3-channel composites");
  add_common(preprocess, flags);
  preprocess->add_option("--manifest", manifest_path, "scan manifest")->required();
  preprocess->add_option("--out", out, "output directory")->required();

  CLI::App* cohort_cmd = app.add_subcommand("cohort", "curate the cohort and plan folds");
  add_common(cohort_cmd, flags);
  cohort_cmd->add_option("--manifest", manifest_path, "scan manifest")->required();
  cohort_cmd->add_option("--spec", flags.config_path, "cohort spec (alias for --config)");
  cohort_cmd->add_option("--out", out, "fold plan path")->required();

  CLI::App* train = app.add_subcommand("train", "train one outer fold's model");
  add_common(train, flags);
  train->add_option("--plan", plan_path, "fold plan")->required();
  train->add_option("--manifest", manifest_path, "composite manifest")->required();
  train->add_option("--run", run, "run index")->required();
  train->add_option("--outer", outer, "outer fold index")->required();
  train->add_option("--out", out, "params output directory")->required();

  CLI::App* evaluate = app.add_subcommand("evaluate", "run full nested cross-validation");
  add_common(evaluate, flags);
  evaluate->add_option("--plan", plan_path, "fold plan")->required();
  evaluate->add_option("--manifest", manifest_path, "composite manifest")->required();
  evaluate->add_option("--out", out, "output directory")->required();

  CLI::App* compare = app.add_subcommand("compare", "calibrated t-test between prediction sets");
  add_common(compare, flags);
  compare->add_option("--reports", report_paths, "prediction CSVs (reference first)")
      ->required()
      ->expected(2, -1);
  compare->add_option("--out", out, "output file (default stdout)");

  CLI::App* explain_cmd = app.add_subcommand("explain", "saliency maps and layer overlap");
  add_common(explain_cmd, flags);
  explain_cmd->add_option("--params", params_dir, "trained params bundle")->required();
  explain_cmd->add_option("--manifest", manifest_path, "composite manifest")->required();
  explain_cmd->add_option("--plan", plan_path, "fold plan")->required();
  explain_cmd->add_option("--run", run, "run index");
  explain_cmd->add_option("--outer", outer, "outer fold (default: all folds of the run)");
  explain_cmd->add_option("--out", out, "output directory");

  CLI::App* report_cmd = app.add_subcommand("report", "render the results table");
  add_common(report_cmd, flags);
  report_cmd->add_option("--reports", report_paths, "prediction CSVs (reference first)")
      ->required()
      ->expected(1, -1);
  report_cmd->add_option("--out", out, "output file (default stdout)");

  CLI::App* runall = app.add_subcommand("run-all", "full experiment in one command");
  add_common(runall, flags);
  runall->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (phantom->parsed()) return cmd_phantom(flags, out);
    if (preprocess->parsed()) return cmd_preprocess(flags, manifest_path, out);
    if (cohort_cmd->parsed()) return cmd_cohort(flags, manifest_path, out);
    if (train->parsed()) return cmd_train(flags, plan_path, manifest_path, run, outer, out);
    if (evaluate->parsed()) return cmd_evaluate(flags, plan_path, manifest_path, out);
    if (compare->parsed()) return cmd_compare(flags, report_paths, out);
    if (explain_cmd->parsed())
      return cmd_explain(flags, params_dir, manifest_path, plan_path, run, outer, out);
    if (report_cmd->parsed()) return cmd_report(flags, report_paths, out);
    if (runall->parsed()) return cmd_run_all(flags, out);
  } catch (const octad::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.is_validation() ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
