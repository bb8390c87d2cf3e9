#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "tpjm/likelihood.hpp"

namespace tpjm {

// A latent Gaussian model as the engine sees it: a sparse Gaussian prior on
// the latent vector indexed by hyperparameters theta, conditionally
// independent observation rows eta_r = a_r^T u, and a hyperparameter prior.
//
// prior_precision must return the same sparsity pattern for every theta
// (values may change); obs_rows is fixed. Throw RejectionError from
// prior_precision or row_scales for theta outside the support.
class LgmModel {
public:
  virtual ~LgmModel() = default;

  virtual int latent_dim() const = 0;
  virtual int hyper_dim() const = 0;
  virtual const std::vector<AugmentedObservation>& obs_rows() const = 0;
  virtual Eigen::SparseMatrix<double> prior_precision(
      const Eigen::VectorXd& theta) const = 0;

  // multipliers referenced by RowEntry::scale_slot; empty when unused
  virtual Eigen::VectorXd row_scales(const Eigen::VectorXd& /*theta*/) const {
    return Eigen::VectorXd();
  }

  virtual LogLikTriple kernel(const AugmentedObservation& row, double eta,
                              const Eigen::VectorXd& theta) const = 0;

  // third derivative in eta, used for the marginal location correction;
  // zero disables the correction for that row
  virtual double kernel_d3(const AugmentedObservation& /*row*/, double /*eta*/,
                           const Eigen::VectorXd& /*theta*/) const {
    return 0.0;
  }

  virtual double log_prior(const Eigen::VectorXd& /*theta*/) const { return 0.0; }
};

}  // namespace tpjm
