#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tpjm/types.hpp"

namespace tpjm {

struct TrueParams {
  Eigen::VectorXd alpha;
  Eigen::VectorXd beta;
  double sigma_eps = 0.3;
  Eigen::VectorXd gamma;
  Eigen::VectorXd phi;
  Eigen::MatrixXd sigma_re;

  // true values keyed by the report parameter names
  std::map<std::string, double> named(const TpjmSpec& spec) const;
};

struct ScenarioConfig {
  int n = 200;
  TpjmSpec spec;
  TrueParams truth;
  std::vector<double> visit_schedule;  // default quarterly on [0, 4]
  double horizon = 4.0;
  double baseline_scale = 0.2;         // exponential baseline hazard scale
  std::uint64_t seed = 1;
};

// presets for the three scenario studies (1: d=2 n=200, 2: d=3 n=200,
// 3: d=3 n=500)
ScenarioConfig scenario_config(int scenario, std::uint64_t seed);

std::vector<SubjectData> generate_dataset(const ScenarioConfig& cfg);

}  // namespace tpjm
