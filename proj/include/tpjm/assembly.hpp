#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <memory>

#include "tpjm/likelihood.hpp"
#include "tpjm/types.hpp"

namespace tpjm {

// The latent prior precision Q(theta_1): n identical d x d RE blocks,
// diagonal fixed-effect precisions, and the scaled RW difference penalty
// (plus a tiny anchor) on the lambda block.
struct PrecisionStructure {
  Eigen::SparseMatrix<double> Q;
  Eigen::MatrixXd re_block;  // the common per-subject block Sigma^{-1}

  double log_det() const;  // via sparse Cholesky, cached

private:
  mutable std::shared_ptr<double> cached_log_det_;
};

// D^T D for a random walk of the given order on m coefficients.
Eigen::SparseMatrix<double> rw_structure(int m, int order);

PrecisionStructure assemble_Q(const HyperParams& theta, const TpjmSpec& spec,
                              const PriorConfig& priors, int n_subjects);

// Numeric A matrix (rows x latent) given the theta-dependent row scales
// (the phi loadings; empty when no scaled entries are present).
Eigen::SparseMatrix<double> assemble_A(
    const std::vector<AugmentedObservation>& rows, int latent_dim,
    const Eigen::VectorXd& scales);

// PC prior log-density for a precision:
// pi(tau) = (rho/2) tau^{-3/2} exp(-rho tau^{-1/2}), rho = -ln(v)/w.
double pc_prec_logdensity(double tau, double w, double v);

// Joint log-prior of theta on the exploration scale (log-precisions carry the
// change-of-variables Jacobian; z and phi are Gaussian).
double log_prior_theta(const HyperParams& theta, const PriorConfig& priors);

}  // namespace tpjm
