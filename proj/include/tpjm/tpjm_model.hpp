#pragma once

#include <map>
#include <string>
#include <vector>

#include "tpjm/assembly.hpp"
#include "tpjm/inla.hpp"
#include "tpjm/lgm.hpp"
#include "tpjm/types.hpp"

namespace tpjm {

// The conditional two-part joint model as a latent Gaussian model.
class TpjmModel : public LgmModel {
public:
  TpjmModel(std::vector<SubjectData> data, TpjmSpec spec, PriorConfig priors);

  int latent_dim() const override { return layout_.size(); }
  int hyper_dim() const override { return theta_index().dim(); }
  const std::vector<AugmentedObservation>& obs_rows() const override {
    return rows_;
  }
  Eigen::SparseMatrix<double> prior_precision(
      const Eigen::VectorXd& theta) const override;
  Eigen::VectorXd row_scales(const Eigen::VectorXd& theta) const override;
  LogLikTriple kernel(const AugmentedObservation& row, double eta,
                      const Eigen::VectorXd& theta) const override;
  double kernel_d3(const AugmentedObservation& row, double eta,
                   const Eigen::VectorXd& theta) const override;
  double log_prior(const Eigen::VectorXd& theta) const override;

  const LatentLayout& layout() const { return layout_; }
  const TpjmSpec& spec() const { return spec_; }
  const PriorConfig& priors() const { return priors_; }
  const std::vector<SubjectData>& data() const { return data_; }
  ThetaIndex theta_index() const { return ThetaIndex{spec_.re_dim()}; }
  HyperParams unpack(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd default_start() const;

private:
  std::vector<SubjectData> data_;
  TpjmSpec spec_;
  PriorConfig priors_;
  LatentLayout layout_;
  std::vector<AugmentedObservation> rows_;
};

// One reported parameter in the engine-agnostic fit table.
struct ParamRow {
  std::string name;      // alpha0, beta1, sigma_eps, phi_a, rho_ab0, ...
  std::string display;   // e.g. "binary: time"
  double estimate = 0.0;
  double sd = 0.0;
  double lo95 = 0.0;
  double hi95 = 0.0;
  double median = 0.0;
  double p_indication = 1.0;  // two-sided tail probability of 0
  bool has_cp = true;         // paper leaves RE sd / correlation cells blank
};

// Shared fitted-model content written by cli_io for both engines.
struct FitReport {
  std::string engine;  // "inla" or "mle"
  bool converged = false;
  std::vector<ParamRow> rows;
  Eigen::VectorXd lambda;  // log baseline hazard per bin (median / MLE)
  int baseline_bins = 0;
  double follow_up_max = 0.0;
  int re_dim = 0;
  Eigen::VectorXd assoc_mean;
  Eigen::MatrixXd assoc_cov;
  Eigen::MatrixXd re_sigma;  // RE covariance at the reported estimate
  double log_marginal = 0.0;
  double seconds = 0.0;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> config_echo;
  // iterative-engine extras (MLE); NaN / 0 for the Bayesian engine
  int iterations = 0;
  double crit_loglik = 0.0;
  double crit_param = 0.0;
  double crit_grad = 0.0;

  const ParamRow* find(const std::string& name) const;
};

// Parameter names in report order for a given spec.
std::vector<std::string> parameter_names(const TpjmSpec& spec);

FitReport make_inla_report(const TpjmModel& model, const PosteriorSummary& s);

// Convenience: build the model, run the engine, label the output.
struct InlaFit {
  PosteriorSummary summary;
  FitReport report;
};
InlaFit fit_inla(const std::vector<SubjectData>& data, const TpjmSpec& spec,
                 const PriorConfig& priors, const InlaOptions& opts);

}  // namespace tpjm
