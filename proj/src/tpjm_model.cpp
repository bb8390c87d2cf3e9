#include "tpjm/tpjm_model.hpp"

#include <cmath>
#include <functional>

#include "tpjm/covariance.hpp"
#include "tpjm/numeric.hpp"

namespace tpjm {

TpjmModel::TpjmModel(std::vector<SubjectData> data, TpjmSpec spec,
                     PriorConfig priors)
    : data_(std::move(data)), spec_(std::move(spec)), priors_(std::move(priors)) {
  spec_.validate();
  priors_.validate();
  layout_ = make_layout(spec_, static_cast<int>(data_.size()));
  rows_ = augment_dataset(data_, spec_, layout_);
}

Eigen::SparseMatrix<double> TpjmModel::prior_precision(
    const Eigen::VectorXd& theta) const {
  return assemble_Q(unpack(theta), spec_, priors_, layout_.n_subjects).Q;
}

Eigen::VectorXd TpjmModel::row_scales(const Eigen::VectorXd& theta) const {
  return unpack(theta).assoc;
}

LogLikTriple TpjmModel::kernel(const AugmentedObservation& row, double eta,
                               const Eigen::VectorXd& theta) const {
  switch (row.kind) {
    case ObsKind::binary:
      return binary_loglik(eta, row.response);
    case ObsKind::continuous:
      return gaussian_loglik(eta, row.response, std::exp(theta[0]));
    case ObsKind::surv_segment:
      return poisson_surv_loglik(eta, row.response, row.offset);
  }
  return {};
}

double TpjmModel::kernel_d3(const AugmentedObservation& row, double eta,
                            const Eigen::VectorXd& theta) const {
  switch (row.kind) {
    case ObsKind::binary: {
      double p = expit(eta);
      return -p * (1.0 - p) * (1.0 - 2.0 * p);
    }
    case ObsKind::continuous:
      return 0.0;
    case ObsKind::surv_segment:
      return -std::exp(std::min(eta + row.offset, 700.0));
  }
  (void)theta;
  return 0.0;
}

double TpjmModel::log_prior(const Eigen::VectorXd& theta) const {
  return log_prior_theta(unpack(theta), priors_);
}

HyperParams TpjmModel::unpack(const Eigen::VectorXd& theta) const {
  return HyperParams::from_vector(theta, spec_.re_dim());
}

Eigen::VectorXd TpjmModel::default_start() const {
  return HyperParams::zeros(spec_.re_dim()).to_vector();
}

const ParamRow* FitReport::find(const std::string& name) const {
  for (const auto& r : rows)
    if (r.name == name) return &r;
  return nullptr;
}

std::vector<std::string> parameter_names(const TpjmSpec& spec) {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < spec.binary_terms.size(); ++j)
    names.push_back("alpha" + std::to_string(j));
  for (std::size_t j = 0; j < spec.continuous_terms.size(); ++j)
    names.push_back("beta" + std::to_string(j));
  names.push_back("sigma_eps");
  for (std::size_t j = 0; j < spec.survival_terms.size(); ++j)
    names.push_back("gamma" + std::to_string(j));
  const int d = spec.re_dim();
  const char* re_names[3] = {"a", "b0", "b1"};
  for (int k = 0; k < d; ++k)
    names.push_back(std::string("phi_") + re_names[k]);
  for (int k = 0; k < d; ++k)
    names.push_back(std::string("sigma_") + re_names[k]);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      names.push_back(std::string("rho_") + re_names[i] + re_names[j]);
  return names;
}

namespace {

double two_sided_p(double est, double sd) {
  if (!(sd > 0.0)) return 1.0;
  return 2.0 * normal_sf(std::abs(est) / sd);
}

ParamRow latent_row(const std::string& name, const std::string& display,
                    const LatentMarginal& m,
                    const std::vector<ThetaPoint>& points, int index) {
  ParamRow r;
  r.name = name;
  r.display = display;
  r.estimate = m.mean;
  r.sd = m.sd;
  r.lo95 = m.q025;
  r.hi95 = m.q975;
  r.median = m.q50;
  // tail probability of 0 under the mixture marginal
  double below = mixture_cdf(points, index, 0.0);
  r.p_indication = 2.0 * std::min(below, 1.0 - below);
  return r;
}

// Hyperparameter summary on the reporting scale, from the split-normal
// marginal moments of theta (the axial design densities); monotone transforms
// map the theta-scale interval.
ParamRow hyper_row(const std::string& name, const std::string& display,
                   const PosteriorSummary& s, int theta_index,
                   const std::function<double(double)>& transform) {
  ParamRow r;
  r.name = name;
  r.display = display;

  double mean = s.theta_marginal_mean.size() > theta_index
                    ? s.theta_marginal_mean[theta_index]
                    : s.theta_mode[theta_index];
  double sd = s.theta_marginal_sd.size() > theta_index
                  ? s.theta_marginal_sd[theta_index]
                  : std::sqrt(s.theta_cov(theta_index, theta_index));
  r.estimate = transform(mean);
  double h = 1e-6 * std::max(1.0, std::abs(mean));
  double deriv = (transform(mean + h) - transform(mean - h)) / (2.0 * h);
  r.sd = std::abs(deriv) * sd;
  double a = transform(mean - 1.959963984540054 * sd);
  double b = transform(mean + 1.959963984540054 * sd);
  r.lo95 = std::min(a, b);
  r.hi95 = std::max(a, b);
  r.median = r.estimate;
  r.p_indication = two_sided_p(r.estimate, r.sd);
  return r;
}

}  // namespace

FitReport make_inla_report(const TpjmModel& model, const PosteriorSummary& s) {
  const TpjmSpec& spec = model.spec();
  const LatentLayout& layout = model.layout();
  const ThetaIndex ti = model.theta_index();
  const int d = spec.re_dim();

  FitReport rep;
  rep.engine = "inla";
  rep.converged = s.mode_converged && s.all_inner_converged;
  rep.baseline_bins = spec.baseline_bins;
  rep.follow_up_max = spec.follow_up_max;
  rep.re_dim = d;
  rep.log_marginal = s.log_marginal;
  rep.seconds = s.seconds;

  for (int j = 0; j < layout.n_alpha; ++j)
    rep.rows.push_back(latent_row("alpha" + std::to_string(j),
                                  "binary: " + spec.binary_terms[j].label(),
                                  s.latent[layout.alpha_index(j)], s.points,
                                  layout.alpha_index(j)));
  for (int j = 0; j < layout.n_beta; ++j)
    rep.rows.push_back(latent_row("beta" + std::to_string(j),
                                  "continuous: " + spec.continuous_terms[j].label(),
                                  s.latent[layout.beta_index(j)], s.points,
                                  layout.beta_index(j)));

  rep.rows.push_back(hyper_row("sigma_eps", "residual S.E.", s,
                               ti.log_prec_eps(),
                               [](double t) { return std::exp(-0.5 * t); }));

  for (int j = 0; j < layout.n_gamma; ++j)
    rep.rows.push_back(latent_row("gamma" + std::to_string(j),
                                  "survival: " + spec.survival_terms[j].label(),
                                  s.latent[layout.gamma_index(j)], s.points,
                                  layout.gamma_index(j)));

  const char* re_names[3] = {"a", "b0", "b1"};
  for (int k = 0; k < d; ++k)
    rep.rows.push_back(hyper_row(std::string("phi_") + re_names[k],
                                 std::string("association: ") + re_names[k], s,
                                 ti.assoc(k), [](double t) { return t; }));
  for (int k = 0; k < d; ++k) {
    ParamRow r = hyper_row(std::string("sigma_") + re_names[k],
                           std::string("RE sd: ") + re_names[k], s,
                           ti.re_log_prec(k),
                           [](double t) { return std::exp(-0.5 * t); });
    r.has_cp = false;
    rep.rows.push_back(r);
  }
  {
    int at = 0;
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j, ++at) {
        ParamRow r = hyper_row(
            std::string("rho_") + re_names[i] + re_names[j],
            std::string("RE corr: ") + re_names[i] + "," + re_names[j], s,
            ti.re_z(at), [](double t) { return std::tanh(t); });
        r.has_cp = false;
        rep.rows.push_back(r);
      }
  }

  rep.lambda.resize(layout.n_lambda);
  for (int k = 0; k < layout.n_lambda; ++k)
    rep.lambda[k] = s.latent[layout.lambda_index(k)].q50;

  rep.assoc_mean.resize(d);
  rep.assoc_cov.resize(d, d);
  for (int i = 0; i < d; ++i) {
    rep.assoc_mean[i] = s.theta_marginal_mean.size() > ti.assoc(i)
                            ? s.theta_marginal_mean[ti.assoc(i)]
                            : s.theta_mode[ti.assoc(i)];
    for (int j = 0; j < d; ++j)
      rep.assoc_cov(i, j) = s.theta_cov(ti.assoc(i), ti.assoc(j));
  }

  HyperParams at_mode = model.unpack(s.theta_mode);
  rep.re_sigma = cov_from_params(at_mode.re_log_prec, at_mode.re_z);
  return rep;
}

InlaFit fit_inla(const std::vector<SubjectData>& data, const TpjmSpec& spec,
                 const PriorConfig& priors, const InlaOptions& opts) {
  TpjmModel model(data, spec, priors);
  InlaEngine engine(model, opts);
  InlaFit out;
  out.summary = engine.fit(model.default_start());
  out.report = make_inla_report(model, out.summary);
  return out;
}

}  // namespace tpjm
