#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <memory>
#include <vector>

#include "tpjm/lgm.hpp"

namespace tpjm {

enum class Strategy { eb, grid, ccd };

struct InlaOptions {
  Strategy strategy = Strategy::ccd;
  double fd_step = 1e-3;            // FD step on the transformed theta scale
  double ccd_f0 = 1.1;              // CCD sphere radius factor, must be > 1
  double grid_halfwidth = 3.0;      // grid extent in posterior SD units
  double grid_step = 1.0;           // grid spacing in SD units
  int max_inner_iterations = 100;
  double inner_step_tol = 1e-8;     // max |Newton step|
  double inner_grad_tol = 1e-6;     // max |gradient|
  double mode_grad_tol = 1e-3;
  int mode_budget_per_dim = 200;    // log_post evaluations per hyper dimension
  double theta_bound = 30.0;        // exploration box on each theta component
  // third-order location correction of the Gaussian latent marginals; the
  // joint-mode centering alone biases means of strongly skewed blocks
  bool mean_correction = true;
};

// Gaussian approximation of pi(u | theta, D) at the inner mode.
struct GaussianApprox {
  Eigen::VectorXd mode;
  Eigen::VectorXd marginal_sd;  // diag of (Q + A^T C A)^{-1}; empty unless requested
  Eigen::VectorXd mean_shift;   // marginal location correction; may be empty
  double log_det_precision = 0.0;
  double loglik = 0.0;          // sum of kernel values at the mode
  double prior_quad = 0.0;      // mode^T Q mode
  bool converged = false;
  int iterations = 0;
};

struct ThetaPoint {
  Eigen::VectorXd theta;
  double log_post = 0.0;  // log pi~(theta | D) up to a constant
  double weight = 0.0;    // normalized integration weight
  GaussianApprox approx;
};

struct ExploreResult {
  Eigen::VectorXd mode;
  double log_post_mode = 0.0;
  Eigen::MatrixXd hessian;    // FD Hessian of log_post at the mode
  Eigen::MatrixXd theta_cov;  // (-hessian)^{-1}, eigenvalue-floored
  std::vector<ThetaPoint> points;
  bool mode_converged = false;
  bool all_inner_converged = true;
  int n_evals = 0;
  // split-normal marginal moments of theta from the axial design densities
  // (reduce to the mode / Gaussian-curvature values without a design)
  Eigen::VectorXd theta_marginal_mean;
  Eigen::VectorXd theta_marginal_sd;
};

struct LatentMarginal {
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
};

struct PosteriorSummary {
  std::vector<LatentMarginal> latent;
  Eigen::VectorXd theta_mode;
  Eigen::MatrixXd theta_cov;
  Eigen::VectorXd theta_marginal_mean;
  Eigen::VectorXd theta_marginal_sd;
  std::vector<ThetaPoint> points;
  double log_marginal = 0.0;  // Laplace-over-theta estimate of log pi(D)
  bool mode_converged = false;
  bool all_inner_converged = true;
  int n_evals = 0;
  double seconds = 0.0;
};

// Shared state (sparsity analyses, warm starts) for repeated evaluations on
// one model. Not thread safe; use one engine per thread.
class InlaEngine {
public:
  InlaEngine(const LgmModel& model, InlaOptions opts = {});
  ~InlaEngine();

  // Newton maximization of -u^T Q u / 2 + sum loglik(a_r^T u) for this theta.
  GaussianApprox inner_mode(const Eigen::VectorXd& theta,
                            bool want_marginal_sd = false);

  // log pi(theta) + log pi(u*|theta) + log p(D|u*,theta) - log pi_G(u*|theta,D);
  // -inf for rejected theta.
  double log_post_theta(const Eigen::VectorXd& theta,
                        GaussianApprox* approx_out = nullptr,
                        bool want_marginal_sd = false);

  // log_post_theta minus the hyperprior (exact for Gaussian likelihoods)
  double log_marginal_given_theta(const Eigen::VectorXd& theta);

  // sum of kernel values at an arbitrary latent configuration
  double loglik_at(const Eigen::VectorXd& u, const Eigen::VectorXd& theta);

  ExploreResult explore_theta(const Eigen::VectorXd& start);

  PosteriorSummary fit(const Eigen::VectorXd& start);

  const InlaOptions& options() const { return opts_; }

private:
  struct FlatRows;
  void refresh_coefs(const Eigen::VectorXd& theta);
  double objective_at(const Eigen::VectorXd& u, const Eigen::VectorXd& theta) const;
  Eigen::MatrixXd fd_hessian(const Eigen::VectorXd& mode, double f_mode);

  const LgmModel& model_;
  InlaOptions opts_;
  std::unique_ptr<FlatRows> rows_;
  Eigen::SparseMatrix<double> H_;  // fixed pattern, values rewritten per iteration
  std::vector<int> q_map_;         // Q storage order -> H value index
  std::vector<std::vector<int>> pair_map_;  // per row: entry-pair -> H value index
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> h_llt_;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> q_llt_;
  bool analyzed_ = false;
  Eigen::VectorXd warm_u_;
};

// Weighted Gaussian-mixture marginals across theta points.
std::vector<LatentMarginal> latent_marginals(const std::vector<ThetaPoint>& points);

double mixture_cdf(const std::vector<ThetaPoint>& points, int index, double x);
double mixture_quantile(const std::vector<ThetaPoint>& points, int index, double p);

// Baseline survival S0(t) = exp(-sum_k exp(lambda_k) * overlap(bin_k, [0,t]))
// on an evenly spaced grid.
struct SurvivalCurve {
  std::vector<double> time;
  std::vector<double> survival;
};
SurvivalCurve baseline_survival(const Eigen::VectorXd& log_hazard,
                                double follow_up_max, int grid_points = 81);

// Central composite design in standardized space: the z-coordinates of the
// design points (first row is the center) and the relative weight of sphere
// points versus the center. Exposed for the design-table tests.
struct CcdDesign {
  Eigen::MatrixXd z_points;   // n_points x dim, row 0 = center
  double sphere_rel_weight;   // Delta_sphere / Delta_center
};
CcdDesign ccd_design(int dim, double f0);

}  // namespace tpjm
