// End-to-end CLI contract: every verb runs in sequence on a tiny cohort,
// exit codes follow the documented mapping (0 ok, 1 validation, 2 runtime).
//
// Usage: cli_contract <path-to-octad-binary> [workdir]

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

std::string g_bin;
fs::path g_work;
int g_failures = 0;

int run(const std::string& args, const std::string& log_name) {
  const std::string cmd =
      "\"" + g_bin + "\" " + args + " > \"" + (g_work / (log_name + ".out")).string() +
      "\" 2> \"" + (g_work / (log_name + ".err")).string() + "\"";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void expect(bool ok, const std::string& what) {
  std::printf("[%s] %s\n", ok ? "ok" : "FAIL", what.c_str());
  if (!ok) ++g_failures;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: cli_contract <octad-binary> [workdir]\n");
    return 2;
  }
  g_bin = argv[1];
  g_work = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "octad_cli";
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  std::ofstream cfg(g_work / "tiny.cfg");
  cfg << "seed=31\n"
         "phantom.n_ad_scans=12\n"
         "phantom.n_cn_scans=13\n"
         "phantom.thinning_fraction=0.5\n"
         "phantom.layer_thicknesses=3.6,3.1,2.8,2.6,2.0,6.1,8.0,1.8,1.6,2.7\n"
         "phantom.bottom_depth_frac=0.68\n"
         "epochs=6\n"
         "swa_start_epoch=4\n"
         "eval.n_runs=2\n";
  cfg.close();
  const std::string common =
      " --fast --config \"" + (g_work / "tiny.cfg").string() + "\"";

  // Validation failures exit with 1.
  expect(run("preprocess --out x", "missing_manifest") == 1,
         "preprocess without --manifest exits 1");
  expect(run("frobnicate", "unknown_verb") == 1, "unknown verb exits 1");
  std::ofstream bad(g_work / "bad.cfg");
  bad << "epochs=ten\n";
  bad.close();
  expect(run("phantom --config \"" + (g_work / "bad.cfg").string() + "\" --out \"" +
                 (g_work / "p").string() + "\"",
             "bad_config") == 1,
         "non-numeric config value exits 1");
  // Runtime failures exit with 2.
  expect(run("preprocess --manifest \"" + (g_work / "nope.csv").string() + "\" --out \"" +
                 (g_work / "c").string() + "\"" + common,
             "missing_file") == 2,
         "unreadable manifest exits 2");

  // Full verb chain on a tiny cohort.
  const std::string scans = (g_work / "scans").string();
  const std::string comps = (g_work / "composites").string();
  expect(run("phantom" + common + " --out \"" + scans + "\"", "phantom") == 0, "phantom runs");
  expect(run("preprocess" + common + " --manifest \"" + scans + "/manifest.csv\" --out \"" +
                 comps + "\"",
             "preprocess") == 0,
         "preprocess runs");
  const std::string plan = comps + "/plan.txt";
  expect(run("cohort" + common + " --manifest \"" + comps + "/manifest.csv\" --out \"" + plan +
                 "\"",
             "cohort") == 0,
         "cohort runs");
  expect(fs::exists(comps + "/plan.matched.csv"), "cohort writes the matched manifest");

  const std::string params = (g_work / "params").string();
  expect(run("train" + common + " --plan \"" + plan + "\" --manifest \"" + comps +
                 "/manifest.csv\" --run 0 --outer 0 --out \"" + params + "\"",
             "train") == 0,
         "train runs");
  expect(fs::exists(params + "/index.txt"), "train writes a params bundle");

  const std::string eval_dir = (g_work / "eval").string();
  expect(run("evaluate" + common + " --plan \"" + plan + "\" --manifest \"" + comps +
                 "/manifest.csv\" --parallel 2 --out \"" + eval_dir + "\"",
             "evaluate") == 0,
         "evaluate runs");
  expect(fs::exists(eval_dir + "/predictions.csv") && fs::exists(eval_dir + "/report.txt"),
         "evaluate writes predictions and report");

  const std::string explain_dir = (g_work / "explain").string();
  expect(run("explain" + common + " --params \"" + params + "\" --manifest \"" + comps +
                 "/manifest.csv\" --plan \"" + plan + "\" --run 0 --outer 0 --tau 0.8 --out \"" +
                 explain_dir + "\"",
             "explain") == 0,
         "explain runs");
  expect(fs::exists(explain_dir + "/aggregate_AD.oct1") || fs::exists(explain_dir + "/index.csv"),
         "explain writes saliency outputs");

  // compare: second prediction set from a different-seed evaluation.
  const std::string eval2 = (g_work / "eval2").string();
  expect(run("evaluate" + common + " --seed 99 --plan \"" + plan + "\" --manifest \"" + comps +
                 "/manifest.csv\" --parallel 2 --out \"" + eval2 + "\"",
             "evaluate2") == 0,
         "second evaluate runs");
  expect(run("compare --reports \"" + eval_dir + "/predictions.csv\" \"" + eval2 +
                 "/predictions.csv\" --out \"" + (g_work / "cmp.txt").string() + "\"",
             "compare") == 0,
         "compare runs");
  const std::string cmp = slurp(g_work / "cmp.txt");
  expect(cmp.find("corr. p") != std::string::npos, "compare emits the corrected p column");

  expect(run("report --reports \"" + eval_dir + "/predictions.csv\" --out \"" +
                 (g_work / "rep.txt").string() + "\"",
             "report") == 0,
         "report runs on a single prediction set");
  const std::string rep = slurp(g_work / "rep.txt");
  expect(rep.find("corr. p") == std::string::npos, "single-model report has no p columns");

  std::printf("%s\n", g_failures == 0 ? "CLI CONTRACT OK" : "CLI CONTRACT FAILED");
  return g_failures == 0 ? 0 : 1;
}
