#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tpjm/mc_mle.hpp"
#include "tpjm/simgen.hpp"
#include "tpjm/tpjm_model.hpp"

namespace tpjm {

enum class Engine { inla, mc_mle };

struct StudyOptions {
  InlaOptions inla;
  MarquardtOptions marquardt;
  int n_points = 1000;  // MC integration points for the MLE engine
  int workers = 1;
  int survival_grid = 81;
};

struct ParamStat {
  std::string name;
  double truth = 0.0;
  double mean_est = 0.0;
  double sd_est = 0.0;   // empirical SD across replicates, divisor R-1
  double cp = 0.0;       // fraction of nominal-95% intervals covering truth
  bool has_cp = true;    // paper leaves RE sd / correlation cells blank
  int n_used = 0;
};

struct ReplicationReport {
  std::string engine;
  int replicates = 0;
  int converged = 0;
  std::vector<ParamStat> params;
  double mean_seconds = 0.0;
  double sd_seconds = 0.0;
  std::vector<double> curve_time;
  std::vector<double> curve_q025, curve_q50, curve_q975;
  // per-replicate raw estimates for audit; NaN when the fit did not converge
  std::vector<std::string> raw_names;
  std::vector<std::vector<double>> raw_estimates;

  const ParamStat* find(const std::string& name) const;
};

// simulate -> fit -> aggregate; deterministic given cfg.seed, independent of
// the worker count. Per-replicate failures are recorded, not thrown.
ReplicationReport run_study(const ScenarioConfig& cfg, Engine engine,
                            int replicates, const StudyOptions& opts = {});

// run_study generalized over the fitting step, used by harness tests to
// validate the aggregation with stub engines
ReplicationReport run_study_with(
    const ScenarioConfig& cfg, const std::string& engine_name, int replicates,
    const StudyOptions& opts,
    const std::function<std::optional<FitReport>(
        const std::vector<SubjectData>&, const ScenarioConfig&)>& fit_one);

// side-by-side Est (SD) [CP] table in the layout of the paper's tables
std::string compare_reports(const ReplicationReport& a,
                            const ReplicationReport& b);
std::string report_table(const ReplicationReport& r);
std::string report_csv(const ReplicationReport& r);
std::string raw_estimates_csv(const ReplicationReport& r);

// run tasks 0..n-1 on `workers` threads; results must be written into
// index-addressed slots by fn for determinism
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

}  // namespace tpjm
