#pragma once

#include <Eigen/Dense>

namespace tpjm {

// Random-effect covariance from its unconstrained parameterization:
// diagonal sigma_k^2 = exp(-log_prec_k), off-diagonals tanh(z_kl) sigma_k sigma_l.
// Pair order for z: (0,1), (0,2), (1,2).
// Throws RejectionError if the implied correlation matrix is not positive
// definite (possible for d = 3).
Eigen::MatrixXd cov_from_params(const Eigen::VectorXd& re_log_prec,
                                const Eigen::VectorXd& re_z);

// Inverse map; requires SPD Sigma with |correlations| < 1.
void params_from_cov(const Eigen::MatrixXd& sigma, Eigen::VectorXd& re_log_prec,
                     Eigen::VectorXd& re_z);

}  // namespace tpjm
