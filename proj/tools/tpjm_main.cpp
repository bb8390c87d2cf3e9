#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <json.hpp>
#include <string>

#include "tpjm/config.hpp"
#include "tpjm/harness.hpp"
#include "tpjm/io.hpp"
#include "tpjm/mc_mle.hpp"
#include "tpjm/posthoc.hpp"
#include "tpjm/rng.hpp"
#include "tpjm/simgen.hpp"
#include "tpjm/tpjm_model.hpp"

namespace fs = std::filesystem;
using namespace tpjm;

namespace {

int fail(const std::string& category, const std::string& message) {
  nlohmann::json err;
  err["error"]["category"] = category;
  err["error"]["message"] = message;
  fprintf(stderr, "%s\n", err.dump().c_str());
  if (category == "usage") return 2;
  if (category == "config") return 3;
  if (category == "data") return 4;
  if (category == "numeric") return 5;
  return 1;
}

std::string rep_name(const std::string& dir, int rep, const char* kind) {
  char buf[64];
  snprintf(buf, sizeof(buf), "rep_%03d_%s.csv", rep, kind);
  return (fs::path(dir) / buf).string();
}

int cmd_simulate(int scenario, int replicates, std::uint64_t seed,
                 const std::string& out_dir, int n_override) {
  fs::create_directories(out_dir);
  ScenarioConfig cfg = scenario_config(scenario, seed);
  if (n_override > 0) cfg.n = n_override;
  for (int r = 0; r < replicates; ++r) {
    cfg.seed = mix_seed(seed, static_cast<std::uint64_t>(r));
    auto data = generate_dataset(cfg);
    write_dataset(data, rep_name(out_dir, r, "longitudinal"),
                  rep_name(out_dir, r, "survival"));
  }
  printf("wrote %d replicate dataset(s) to %s\n", replicates, out_dir.c_str());
  return 0;
}

int cmd_fit(const std::string& engine, const std::string& long_csv,
            const std::string& surv_csv, const std::string& config_path,
            const std::string& out_path, std::uint64_t seed, int n_points,
            const std::string& strategy, int bins, bool no_pvalues) {
  auto data = read_dataset(long_csv, surv_csv);

  ModelConfig config = config_path.empty() ? default_model_config()
                                           : load_config_file(config_path);
  if (!strategy.empty()) config.sections["engine"]["strategy"] = strategy;
  if (bins > 0) config.sections["model"]["baseline_bins"] = std::to_string(bins);

  TpjmSpec spec = build_spec(config, &data);
  PriorConfig priors = build_priors(config);

  FitReport report;
  if (engine == "inla") {
    InlaOptions opts = build_inla_options(config);
    InlaFit fit = fit_inla(data, spec, priors, opts);
    report = std::move(fit.report);
    report.seed = seed;
  } else if (engine == "mle") {
    MleResult res = fit_mle(data, spec, n_points, seed, {});
    report = make_mle_report(spec, res);
  } else {
    return fail("usage", "engine must be inla or mle");
  }
  for (const auto& [sec, kv] : config.sections)
    for (const auto& [k, v] : kv) report.config_echo[sec + "." + k] = v;

  write_fit(report, out_path);
  fputs(fit_table(report, !no_pvalues).c_str(), stdout);
  printf("fit written to %s\n", out_path.c_str());
  return 0;
}

int cmd_study(int scenario, const std::string& engine, int replicates,
              std::uint64_t seed, const std::string& out_dir, int workers,
              int n_points, const std::string& strategy, int n_override) {
  fs::create_directories(out_dir);
  ScenarioConfig cfg = scenario_config(scenario, seed);
  if (n_override > 0) cfg.n = n_override;

  StudyOptions opts;
  opts.workers = workers;
  opts.n_points = n_points;
  if (strategy == "eb")
    opts.inla.strategy = Strategy::eb;
  else if (strategy == "grid")
    opts.inla.strategy = Strategy::grid;
  else if (!strategy.empty() && strategy != "ccd")
    return fail("usage", "strategy must be ccd, eb or grid");

  auto write_one = [&](const ReplicationReport& rep) {
    std::string tag = rep.engine;
    write_text_file((fs::path(out_dir) / ("report_" + tag + ".txt")).string(),
                    report_table(rep));
    write_text_file((fs::path(out_dir) / ("report_" + tag + ".csv")).string(),
                    report_csv(rep));
    write_text_file(
        (fs::path(out_dir) / ("estimates_" + tag + ".csv")).string(),
        raw_estimates_csv(rep));
  };

  if (engine == "inla" || engine == "mle") {
    ReplicationReport rep = run_study(
        cfg, engine == "inla" ? Engine::inla : Engine::mc_mle, replicates,
        opts);
    write_one(rep);
    fputs(report_table(rep).c_str(), stdout);
  } else if (engine == "both") {
    ReplicationReport a = run_study(cfg, Engine::inla, replicates, opts);
    ReplicationReport b = run_study(cfg, Engine::mc_mle, replicates, opts);
    write_one(a);
    write_one(b);
    std::string cmp = compare_reports(a, b);
    write_text_file((fs::path(out_dir) / "comparison.txt").string(), cmp);
    fputs(cmp.c_str(), stdout);
  } else {
    return fail("usage", "engine must be inla, mle or both");
  }
  printf("study outputs written to %s\n", out_dir.c_str());
  return 0;
}

int cmd_posthoc(const std::string& model_path, const std::string& component,
                double threshold_sd, double threshold_abs_v, bool absolute,
                const std::string& direction, long draws, std::uint64_t seed,
                const std::string& out_path) {
  FitReport report = read_fit(model_path);
  const int d = report.re_dim;

  int comp = -1;
  const char* names[3] = {"a", "b0", "b1"};
  for (int k = 0; k < d; ++k)
    if (component == names[k]) comp = k;
  if (comp < 0)
    return fail("usage",
                "component must be one of a, b0, b1 present in the model");

  SubgroupQuery query;
  query.component = comp;
  query.absolute = absolute;
  query.threshold = absolute ? threshold_abs_v : threshold_sd;
  query.above = direction == "above";
  query.mc_draws = draws;
  query.seed = seed;

  ConditionalMeans cm = conditional_re_means(report.re_sigma, query);
  HazardRatio hr = subgroup_hazard_ratio(report.assoc_mean, report.assoc_cov,
                                         cm.means, draws, mix_seed(seed, 1));

  nlohmann::json j;
  j["component"] = component;
  j["direction"] = direction;
  j["threshold_abs"] = cm.threshold_abs;
  j["accepted_draws"] = cm.accepted;
  for (int k = 0; k < d; ++k) {
    j["conditional_means"][names[k]] = cm.means[k];
    j["conditional_mean_se"][names[k]] = cm.mc_se[k];
  }
  j["hazard_ratio"]["point"] = hr.point;
  j["hazard_ratio"]["lo95"] = hr.lo95;
  j["hazard_ratio"]["hi95"] = hr.hi95;

  std::string text = j.dump(2) + "\n";
  fputs(text.c_str(), stdout);
  if (!out_path.empty()) write_text_file(out_path, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "conditional two-part joint model: simulation, fitting and post-fit "
      "tools"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "generate scenario datasets");
  int scenario = 1, replicates = 1, n_override = 0;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  sim->add_option("--scenario", scenario, "scenario 1, 2 or 3")
      ->check(CLI::Range(1, 3));
  sim->add_option("--replicates", replicates)->check(CLI::PositiveNumber);
  sim->add_option("--seed", seed);
  sim->add_option("--out", out_dir)->required();
  sim->add_option("--n", n_override, "override the scenario sample size");

  auto* fit = app.add_subcommand("fit", "fit one dataset");
  std::string engine = "inla", data_dir, long_csv, surv_csv, config_path,
              out_path = "fit.json", strategy;
  int n_points = 1000, bins = 0;
  bool no_pvalues = false;
  fit->add_option("--engine", engine, "inla or mle");
  fit->add_option("--data", data_dir,
                  "directory containing longitudinal.csv and survival.csv");
  fit->add_option("--longitudinal", long_csv);
  fit->add_option("--survival", surv_csv);
  fit->add_option("--config", config_path, "model config file");
  fit->add_option("--out", out_path);
  fit->add_option("--seed", seed);
  fit->add_option("--n-points", n_points, "MC integration points (mle)");
  fit->add_option("--strategy", strategy, "ccd, eb or grid (inla)");
  fit->add_option("--bins", bins, "override baseline hazard bins");
  fit->add_flag("--no-pvalues", no_pvalues, "suppress p-value indications");

  auto* study = app.add_subcommand("study", "replication study");
  std::string study_engine = "inla";
  int workers = 1;
  study->add_option("--scenario", scenario)->check(CLI::Range(1, 3));
  study->add_option("--engine", study_engine, "inla, mle or both");
  study->add_option("--replicates", replicates)->check(CLI::PositiveNumber);
  study->add_option("--seed", seed);
  study->add_option("--out", out_dir)->required();
  study->add_option("--workers", workers)->check(CLI::PositiveNumber);
  study->add_option("--n-points", n_points);
  study->add_option("--strategy", strategy);
  study->add_option("--n", n_override, "override the scenario sample size");

  auto* post = app.add_subcommand("posthoc", "subgroup analysis from a fit");
  std::string model_path, component = "b1", direction = "above", post_out;
  double threshold_sd = 1.0, threshold_abs_v = 0.0;
  long draws = 100000;
  post->add_option("--model", model_path)->required();
  post->add_option("--component", component, "a, b0 or b1");
  auto* tsd =
      post->add_option("--threshold-sd", threshold_sd, "threshold in SD units");
  auto* tab =
      post->add_option("--threshold-abs", threshold_abs_v, "absolute threshold");
  tsd->excludes(tab);
  post->add_option("--direction", direction)
      ->check(CLI::IsMember({"above", "below"}));
  post->add_option("--draws", draws);
  post->add_option("--seed", seed);
  post->add_option("--out", post_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return fail("usage", e.what());
  }

  try {
    if (sim->parsed())
      return cmd_simulate(scenario, replicates, seed, out_dir, n_override);
    if (fit->parsed()) {
      if (!data_dir.empty()) {
        long_csv = (fs::path(data_dir) / "longitudinal.csv").string();
        surv_csv = (fs::path(data_dir) / "survival.csv").string();
      }
      if (long_csv.empty() || surv_csv.empty())
        return fail("usage",
                    "provide --data DIR or --longitudinal and --survival");
      return cmd_fit(engine, long_csv, surv_csv, config_path, out_path, seed,
                     n_points, strategy, bins, no_pvalues);
    }
    if (study->parsed())
      return cmd_study(scenario, study_engine, replicates, seed, out_dir,
                       workers, n_points, strategy, n_override);
    if (post->parsed())
      return cmd_posthoc(model_path, component, threshold_sd, threshold_abs_v,
                         tab->count() > 0, direction, draws, seed, post_out);
  } catch (const RejectionError& e) {
    return fail("numeric", e.what());
  } catch (const std::invalid_argument& e) {
    return fail("data", e.what());
  } catch (const std::runtime_error& e) {
    return fail("numeric", e.what());
  } catch (const std::exception& e) {
    return fail("io", e.what());
  }
  return fail("usage", "no subcommand");
}
