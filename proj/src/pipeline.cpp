#include "octad/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace octad::pipeline {

namespace fs = std::filesystem;

void apply_fast_profile(Config& c) {
  c.set_i64("phantom.height", 81);
  c.set_i64("phantom.width", 64);
  c.set_i64("preprocess.crop_h", 64);
  c.set_i64("preprocess.crop_w", 64);
  c.set_i64("epochs", 10);
  c.set_i64("swa_start_epoch", 8);
  c.set_f64("augment.translate_max", 4);
  c.set_f64("augment.vessel_width_min", 2);
  c.set_f64("augment.vessel_width_max", 5);
}

std::string dirname_of(const std::string& path) {
  const fs::path p(path);
  const fs::path dir = p.parent_path();
  return dir.empty() ? std::string(".") : dir.string();
}

Settings Settings::resolve(const Config& merged) {
  Settings s;
  s.raw = merged;
  s.run = RunConfig::from_config(merged);
  s.aug = augment::Ranges::from_config(merged);
  s.weight_decay = merged.get_f64("model.weight_decay", s.weight_decay);

  const int ph = static_cast<int>(merged.get_i64("phantom.height", 650));
  const int pw = static_cast<int>(merged.get_i64("phantom.width", 512));
  phantom::PhantomSpec spec = phantom::PhantomSpec::defaults(ph, pw);
  spec.speckle_sigma = merged.get_f64("phantom.speckle_sigma", spec.speckle_sigma);
  spec.contour_amplitude = merged.get_f64("phantom.contour_amplitude", spec.contour_amplitude);
  spec.thickness_jitter = merged.get_f64("phantom.thickness_jitter", spec.thickness_jitter);
  spec.foveal_pit_depth = merged.get_f64("phantom.foveal_pit_depth", spec.foveal_pit_depth);
  spec.foveal_pit_width = merged.get_f64("phantom.foveal_pit_width", spec.foveal_pit_width);
  spec.background_level = merged.get_f64("phantom.background_level", spec.background_level);
  spec.bottom_depth_frac = merged.get_f64("phantom.bottom_depth_frac", spec.bottom_depth_frac);
  spec.subfield_halfwidth =
      static_cast<int>(merged.get_i64("phantom.subfield_halfwidth", spec.subfield_halfwidth));
  if (merged.has("phantom.layer_intensities")) {
    const auto v = merged.get_f64_list("phantom.layer_intensities", {});
    if (v.size() != phantom::kNumLayers)
      throw Error(Errc::invalid_config, "phantom.layer_intensities needs 10 values");
    std::copy(v.begin(), v.end(), spec.layer_base_intensity.begin());
  }
  if (merged.has("phantom.layer_thicknesses")) {
    const auto v = merged.get_f64_list("phantom.layer_thicknesses", {});
    if (v.size() != phantom::kNumLayers)
      throw Error(Errc::invalid_config, "phantom.layer_thicknesses needs 10 values");
    std::copy(v.begin(), v.end(), spec.layer_base_thickness.begin());
  }
  spec.signal.target_layer =
      static_cast<int>(merged.get_i64("phantom.target_layer", spec.signal.target_layer));
  spec.signal.thinning_fraction =
      merged.get_f64("phantom.thinning_fraction", 0.4);
  const std::string region = merged.get("phantom.signal_region", "central_subfield");
  if (region == "central_subfield") spec.signal.region = phantom::SignalRegion::central_subfield;
  else if (region == "global") spec.signal.region = phantom::SignalRegion::global;
  else throw Error(Errc::invalid_config, "phantom.signal_region must be central_subfield|global");
  s.phantom_spec = spec;

  s.cohort_opt.year_cap = s.run.year_cap;
  s.cohort_opt.two_eye_prob = merged.get_f64("phantom.two_eye_prob", s.cohort_opt.two_eye_prob);
  s.cohort_opt.age_min = static_cast<int>(merged.get_i64("phantom.age_min", s.cohort_opt.age_min));
  s.cohort_opt.age_max = static_cast<int>(merged.get_i64("phantom.age_max", s.cohort_opt.age_max));
  s.n_ad_scans = static_cast<int>(merged.get_i64("phantom.n_ad_scans", s.n_ad_scans));
  s.n_cn_scans = static_cast<int>(merged.get_i64("phantom.n_cn_scans", s.n_cn_scans));

  s.crop_h = static_cast<int>(merged.get_i64("preprocess.crop_h", s.crop_h));
  s.crop_w = static_cast<int>(merged.get_i64("preprocess.crop_w", s.crop_w));

  s.cohort_spec = cohort::CohortSpec::from_config(merged);
  s.n_runs = static_cast<int>(merged.get_i64("eval.n_runs", s.n_runs));
  s.n_outer = static_cast<int>(merged.get_i64("eval.n_outer", s.n_outer));
  s.n_inner = static_cast<int>(merged.get_i64("eval.n_inner", s.n_inner));
  s.lr_grid = merged.get_f64_list("eval.grid", s.lr_grid);
  s.rho = merged.get_f64("eval.rho", 1.0 / (s.n_outer - 1));
  s.df = merged.get_f64("eval.df", static_cast<double>(s.n_runs - 1));
  s.parallel = static_cast<int>(merged.get_i64("eval.parallel", s.n_outer));

  s.explain_halfwidth = static_cast<int>(
      merged.get_i64("explain.subfield_halfwidth", s.phantom_spec.subfield_halfwidth));
  s.top_frac = merged.get_f64("explain.top_frac", s.top_frac);
  s.pooled_overlap = merged.get_bool("explain.pooled", s.pooled_overlap);
  s.model_name = merged.get("report.name", to_string(s.run.channel_mode));
  return s;
}

Manifest step_phantom(const Settings& s, const std::string& out_dir) {
  Rng rng = Rng::derive(s.run.seed, seed_tag::phantom);
  return phantom::generate_cohort(s.n_ad_scans, s.n_cn_scans, s.phantom_spec, s.cohort_opt, rng,
                                  out_dir);
}

Manifest step_preprocess(const Settings& s, const Manifest& m, const std::string& manifest_dir,
                         const std::string& out_dir) {
  fs::create_directories(out_dir);
  Manifest out = m;
  for (SubjectRecord& r : out.rows) {
    phantom::BScan b;
    const std::string src = manifest_dir + "/" + r.image_path;
    b.pixels = read_tensor(src).to_u16();
    b.seg = phantom::Segmentation::from_tensor(read_tensor(src + ".seg"));

    preprocess::Composite comp =
        preprocess::run_pipeline(b, s.crop_h, s.crop_w, s.run.channel_mode);

    std::string name = r.image_path;
    const size_t slash = name.find_last_of('/');
    if (slash != std::string::npos) name = name.substr(slash + 1);
    write_tensor(out_dir + "/" + name, preprocess::composite_to_tensor(comp));
    write_tensor(out_dir + "/" + name + ".seg", comp.seg.to_tensor());
    r.image_path = name;
  }
  out.save(out_dir + "/manifest.csv");
  return out;
}

CohortOutputs step_cohort(const Settings& s, const Manifest& m) {
  CohortOutputs out;
  const Manifest selected = cohort::select_ad(m, s.cohort_spec);
  Rng match_rng = Rng::derive(s.cohort_spec.match_seed, seed_tag::match);
  cohort::MatchResult match = cohort::match_controls(selected, s.cohort_spec, match_rng);
  out.matched = std::move(match.manifest);
  out.warnings = std::move(match.warnings);
  Rng fold_rng = Rng::derive(s.run.seed, seed_tag::folds);
  out.plan =
      cohort::plan_folds(out.matched, s.n_runs, s.n_outer, s.n_inner, fold_rng, s.run.seed);
  return out;
}

std::vector<model::Sample> load_samples(const Manifest& m, const std::string& manifest_dir) {
  std::vector<model::Sample> out;
  out.reserve(m.rows.size());
  for (const SubjectRecord& r : m.rows) {
    model::Sample s;
    const std::string src = manifest_dir + "/" + r.image_path;
    s.comp = preprocess::composite_from_tensors(read_tensor(src), read_tensor(src + ".seg"));
    s.label = r.label == Label::AD ? 1 : 0;
    s.years = r.years_to_diagnosis;
    s.subject_id = r.subject_id;
    s.eye = r.eye;
    s.instance = r.instance;
    out.push_back(std::move(s));
  }
  return out;
}

eval::TrainerFn make_model_trainer(const Settings& s, const std::vector<model::Sample>& samples,
                                   std::map<int, model::ParamSet<float>>* final_params,
                                   std::mutex* params_mutex) {
  const int n_outer = s.n_outer;
  return [&s, &samples, final_params, params_mutex, n_outer](const eval::TrainJob& job) {
    model::TrainSettings ts;
    ts.cfg = s.run;
    ts.cfg.learning_rate = job.learning_rate;
    ts.aug = s.aug;
    ts.shape = s.shape;
    ts.weight_decay = s.weight_decay;

    std::vector<const model::Sample*> train_set;
    train_set.reserve(job.train_rows.size());
    for (int row : job.train_rows) train_set.push_back(&samples[row]);

    auto params = std::make_shared<model::ParamSet<float>>(
        model::train_classifier(train_set, ts, job.seed));
    if (job.inner < 0 && final_params) {
      std::unique_lock<std::mutex> lock;
      if (params_mutex) lock = std::unique_lock<std::mutex>(*params_mutex);
      (*final_params)[job.run * n_outer + job.outer] = *params;
    }
    return [params, &samples](int row) {
      return model::predict_score(*params, samples[row].comp);
    };
  };
}

ExplainOutputs step_explain(const Settings& s, const std::vector<model::Sample>& samples,
                            const Manifest& manifest, const cohort::FoldPlan& plan, int run,
                            const std::map<int, model::ParamSet<float>>& final_params,
                            const std::string& out_dir, int only_outer) {
  if (run < 0 || run >= plan.n_runs) throw Error(Errc::invalid_argument, "run out of range");
  if (!out_dir.empty()) fs::create_directories(out_dir);

  std::map<std::string, std::vector<int>> rows_of;
  for (int i = 0; i < static_cast<int>(manifest.rows.size()); ++i)
    rows_of[manifest.rows[i].subject_id].push_back(i);

  std::vector<explain::LayerOverlap> per_sample;
  std::vector<explain::BinGrid> masks;
  std::vector<std::array<explain::BinGrid, explain::kNumRegions>> region_sets;
  std::vector<int> labels;
  std::vector<MatF> maps_ad, maps_cn;
  std::ostringstream index_csv;
  index_csv << "row,subject_id,eye,instance,label,predicted,score,map\n";

  const cohort::FoldPlan::Run& R = plan.runs[run];
  for (int outer = 0; outer < plan.n_outer; ++outer) {
    if (only_outer >= 0 && outer != only_outer) continue;
    auto pit = final_params.find(run * s.n_outer + outer);
    if (pit == final_params.end())
      throw Error(Errc::invalid_argument, "missing final model for fold " + std::to_string(outer));
    const model::ParamSet<float>& params = pit->second;

    std::vector<int> test_rows;
    for (const auto& [id, fold] : R.outer_of)
      if (fold == outer)
        for (int r : rows_of.at(id)) test_rows.push_back(r);
    std::sort(test_rows.begin(), test_rows.end());

    for (int row : test_rows) {
      const model::Sample& sample = samples[row];
      // Saliency for the true class, per-class panels; the predicted class
      // is recorded alongside.
      explain::SaliencyMap sal = explain::grad_cam(params, sample.comp, sample.label);
      const double score = model::predict_score(params, sample.comp);
      explain::BinGrid mask = explain::threshold_mask(sal, s.run.threshold_saliency);
      auto regions = explain::layer_regions(sample.comp.seg, sample.comp.height(),
                                            sample.comp.width(), s.explain_halfwidth);
      per_sample.push_back(explain::overlap(mask, regions));
      labels.push_back(sample.label);
      if (s.pooled_overlap) {
        masks.push_back(std::move(mask));
        region_sets.push_back(std::move(regions));
      }
      (sample.label == 1 ? maps_ad : maps_cn).push_back(sal.values);

      std::string map_name;
      if (!out_dir.empty()) {
        map_name = "map_" + std::to_string(row) + ".oct1";
        write_tensor(out_dir + "/" + map_name, TensorFile::from_f32(sal.values));
      }
      char score_buf[32];
      std::snprintf(score_buf, sizeof(score_buf), "%.6f", score);
      index_csv << row << ',' << sample.subject_id << ',' << to_string(sample.eye) << ','
                << sample.instance << ',' << sample.label << ',' << (score >= 0.5 ? 1 : 0) << ','
                << score_buf << ',' << map_name << '\n';
    }
  }

  ExplainOutputs out;
  out.table = s.pooled_overlap
                  ? explain::class_overlap_table_pooled(masks, region_sets, labels)
                  : explain::class_overlap_table(per_sample, labels);
  out.rendered = explain::render_overlap_table(out.table);
  if (!out_dir.empty()) {
    if (!maps_ad.empty())
      write_tensor(out_dir + "/aggregate_AD.oct1",
                   TensorFile::from_f32(explain::aggregate_top_fraction(maps_ad, s.top_frac)));
    if (!maps_cn.empty())
      write_tensor(out_dir + "/aggregate_CN.oct1",
                   TensorFile::from_f32(explain::aggregate_top_fraction(maps_cn, s.top_frac)));
    std::ofstream idx(out_dir + "/index.csv", std::ios::trunc);
    idx << index_csv.str();
  }
  return out;
}

void run_all(const Settings& s, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::cerr << "seed=" << s.run.seed << '\n' << kFormatVersions << '\n';
  std::cerr << "config:\n" << s.raw.serialize();

  const Manifest scans = step_phantom(s, out_dir + "/phantom");
  std::cerr << "phantom: " << scans.rows.size() << " scans\n";

  const Manifest composites =
      step_preprocess(s, scans, out_dir + "/phantom", out_dir + "/composites");

  CohortOutputs cohort_out = step_cohort(s, composites);
  for (const std::string& w : cohort_out.warnings) std::cerr << "match warning: " << w << '\n';
  cohort_out.matched.save(out_dir + "/matched.csv");
  cohort_out.plan.save(out_dir + "/plan.txt");

  const std::vector<model::Sample> samples =
      load_samples(cohort_out.matched, out_dir + "/composites");

  std::map<int, model::ParamSet<float>> final_params;
  std::mutex params_mutex;
  eval::TrainerFn trainer = make_model_trainer(s, samples, &final_params, &params_mutex);

  eval::NestedCvOptions opt;
  opt.lr_grid = s.lr_grid;
  opt.seed = s.run.seed;
  opt.n_threads = s.parallel;
  std::vector<eval::Prediction> preds;
  std::vector<double> chosen;
  eval::MetricsReport report =
      eval::run_nested_cv(cohort_out.plan, cohort_out.matched, trainer, opt, &preds, &chosen);
  report.model_name = s.model_name;

  {
    std::ofstream f(out_dir + "/predictions.csv", std::ios::trunc);
    f << eval::predictions_to_csv(preds);
  }
  {
    std::ofstream f(out_dir + "/report.txt", std::ios::trunc);
    f << eval::render_report(std::span(&report, 1), {});
  }
  std::cerr << "mAUC=" << report.mean_auc() << " +- " << report.std_auc() << '\n';
  for (size_t i = 0; i < chosen.size(); ++i)
    std::cerr << "fold " << i << " lr=" << chosen[i] << '\n';

  ExplainOutputs ex = step_explain(s, samples, cohort_out.matched, cohort_out.plan, /*run=*/0,
                                   final_params, out_dir + "/saliency");
  std::ofstream f(out_dir + "/overlaps.txt", std::ios::trunc);
  f << ex.rendered;
}

}  // namespace octad::pipeline
