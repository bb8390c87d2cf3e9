#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tpjm/tpjm_model.hpp"
#include "tpjm/types.hpp"

namespace tpjm {

// Objective that supports cheap re-evaluation after perturbing a few
// coordinates (for finite-difference derivatives).
class PerturbableObjective {
public:
  virtual ~PerturbableObjective() = default;
  virtual int dim() const = 0;
  // stateless full evaluation (may return -inf outside the domain)
  virtual double value(const Eigen::VectorXd& x) const = 0;
  // full evaluation that refreshes the cache used by perturbed()
  virtual double set_base(const Eigen::VectorXd& x) = 0;
  // objective with the listed coordinates set to new values, rest at the base
  virtual double perturbed(
      const std::vector<std::pair<int, double>>& changes) const = 0;
};

Eigen::VectorXd fd_gradient(const PerturbableObjective& obj,
                            const Eigen::VectorXd& x, double rel_step);
// forward cross-difference scheme, cheap, used inside the optimizer loop
Eigen::MatrixXd fd_hessian_forward(const PerturbableObjective& obj,
                                   const Eigen::VectorXd& x, double f0,
                                   double rel_step);
// central scheme, used once at the optimum for standard errors
Eigen::MatrixXd fd_hessian_central(const PerturbableObjective& obj,
                                   const Eigen::VectorXd& x, double f0,
                                   double rel_step);

struct MarquardtOptions {
  int max_iterations = 500;
  double tol = 1e-3;          // applies to all three convergence criteria
  double fd_rel_step = 1e-4;
  int hessian_refresh = 2;    // recompute the Hessian every k accepted steps
  double mu0 = 1e-3;
  bool final_central_hessian = true;
};

struct MarquardtResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::MatrixXd hessian;  // of the objective at x (central FD)
  bool converged = false;
  double crit_value = 0.0;  // |loglik change| at the last step
  double crit_param = 0.0;  // max |parameter change|
  double crit_grad = 0.0;   // max-norm of the gradient
  int iterations = 0;
};

// Ridge-damped Newton ascent with the three 1e-3 stopping criteria.
MarquardtResult maximize(PerturbableObjective& obj, const Eigen::VectorXd& start,
                         const MarquardtOptions& opts = {});

// quasi-random marginal log-likelihood over random effects for an arbitrary
// per-subject conditional log-likelihood; z_draws columns are the standardized
// draws (see quasi_normal_draws)
double mc_marginal_loglik_generic(
    const std::function<double(int, const Eigen::VectorXd&)>& cond_loglik,
    int n_subjects, const Eigen::MatrixXd& chol_sigma,
    const Eigen::MatrixXd& z_draws);

// TPJM marginal likelihood by quasi-random Monte Carlo with common random
// numbers; parameter order
// [alpha, beta, gamma, log_sigma_eps, re_log_prec, re_z, phi, lambda].
class TpjmMcObjective : public PerturbableObjective {
public:
  TpjmMcObjective(const std::vector<SubjectData>& data, const TpjmSpec& spec,
                  int n_points, std::uint64_t seed);
  ~TpjmMcObjective() override;

  int dim() const override;
  double value(const Eigen::VectorXd& x) const override;
  double set_base(const Eigen::VectorXd& x) override;
  double perturbed(
      const std::vector<std::pair<int, double>>& changes) const override;

  // Monte-Carlo standard error of the marginal log-likelihood at the base
  double mc_se() const;

  const std::vector<std::string>& labels() const { return labels_; }
  int index_of(const std::string& label) const;
  Eigen::VectorXd start_values() const;  // data-driven starting point
  int n_points() const { return n_points_; }
  std::uint64_t seed() const { return seed_; }
  const TpjmSpec& spec() const { return spec_; }

  struct Blocks {
    Eigen::VectorXd alpha, beta, gamma;
    double log_sigma_eps = 0.0;
    Eigen::VectorXd re_log_prec, re_z, phi, lambda;
  };
  Blocks unpack(const Eigen::VectorXd& x) const;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::vector<std::string> labels_;
  TpjmSpec spec_;
  int n_points_ = 0;
  std::uint64_t seed_ = 0;
};

// spec-level operation: one evaluation of the MC marginal log-likelihood
double mc_marginal_loglik(const Eigen::VectorXd& params,
                          const std::vector<SubjectData>& data,
                          const TpjmSpec& spec, int n_points,
                          std::uint64_t seed);

struct MleResult {
  std::vector<std::string> labels;
  Eigen::VectorXd estimates;   // internal scale
  Eigen::VectorXd std_errors;  // empty when observed information is not SPD
  Eigen::MatrixXd cov;
  bool converged = false;
  double crit_value = 0.0, crit_param = 0.0, crit_grad = 0.0;
  double loglik = 0.0;
  int iterations = 0;
  double seconds = 0.0;
  int n_points = 0;
  std::uint64_t seed = 0;
};

MleResult fit_mle(const std::vector<SubjectData>& data, const TpjmSpec& spec,
                  int n_points, std::uint64_t seed,
                  const MarquardtOptions& opts = {});

FitReport make_mle_report(const TpjmSpec& spec, const MleResult& res);

}  // namespace tpjm
