#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

namespace tpjm {

struct SubgroupQuery {
  int component = 0;        // index of the thresholded random effect
  double threshold = 1.0;   // in SD units unless absolute is set
  bool absolute = false;
  bool above = true;        // condition: component > threshold (else <)
  long mc_draws = 100000;   // >= 1e4
  std::uint64_t seed = 1;
};

struct ConditionalMeans {
  Eigen::VectorXd means;     // E[re | condition]
  Eigen::VectorXd mc_se;
  long accepted = 0;
  double threshold_abs = 0.0;
};

// E[(a, b0, b1) | component > c] by Monte-Carlo rejection sampling from
// N(0, Sigma). The exact 1-d truncation formula
// E[X_j | X_k > c] = rho_jk sigma_j phi(c~)/(1 - Phi(c~)) is the cross-check.
ConditionalMeans conditional_re_means(const Eigen::MatrixXd& sigma,
                                      const SubgroupQuery& query);

// analytic counterpart for component j under the same query
double conditional_mean_analytic(const Eigen::MatrixXd& sigma, int j,
                                 const SubgroupQuery& query);

struct HazardRatio {
  double point = 1.0;   // exp(phi . cond_means)
  double lo95 = 1.0;
  double hi95 = 1.0;
};

// interval by propagating Gaussian parameter draws phi ~ N(mean, cov)
HazardRatio subgroup_hazard_ratio(const Eigen::VectorXd& phi_mean,
                                  const Eigen::MatrixXd& phi_cov,
                                  const Eigen::VectorXd& cond_means,
                                  long draws, std::uint64_t seed);

}  // namespace tpjm
