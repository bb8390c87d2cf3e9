#include "tpjm/covariance.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <stdexcept>

#include "tpjm/numeric.hpp"

namespace tpjm {

Eigen::MatrixXd cov_from_params(const Eigen::VectorXd& re_log_prec,
                                const Eigen::VectorXd& re_z) {
  int d = static_cast<int>(re_log_prec.size());
  if (re_z.size() != d * (d - 1) / 2)
    throw std::invalid_argument("cov_from_params: z length != d(d-1)/2");

  Eigen::VectorXd sd(d);
  for (int k = 0; k < d; ++k) sd[k] = std::exp(-0.5 * re_log_prec[k]);

  Eigen::MatrixXd sigma(d, d);
  int at = 0;
  for (int i = 0; i < d; ++i) {
    sigma(i, i) = sd[i] * sd[i];
    for (int j = i + 1; j < d; ++j) {
      double rho = std::tanh(re_z[at++]);
      sigma(i, j) = sigma(j, i) = rho * sd[i] * sd[j];
    }
  }

  if (d > 2) {
    // pairwise correlations can be jointly infeasible
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success)
      throw RejectionError("implied RE correlation matrix is not positive definite");
  }
  return sigma;
}

void params_from_cov(const Eigen::MatrixXd& sigma, Eigen::VectorXd& re_log_prec,
                     Eigen::VectorXd& re_z) {
  int d = static_cast<int>(sigma.rows());
  re_log_prec.resize(d);
  re_z.resize(d * (d - 1) / 2);
  for (int k = 0; k < d; ++k) {
    if (!(sigma(k, k) > 0.0))
      throw std::invalid_argument("params_from_cov: non-positive variance");
    re_log_prec[k] = -std::log(sigma(k, k));
  }
  int at = 0;
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      double rho = sigma(i, j) / std::sqrt(sigma(i, i) * sigma(j, j));
      if (!(std::abs(rho) < 1.0))
        throw std::invalid_argument("params_from_cov: |correlation| >= 1");
      re_z[at++] = std::atanh(rho);
    }
}

}  // namespace tpjm
