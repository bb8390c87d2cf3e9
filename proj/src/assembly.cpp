#include "tpjm/assembly.hpp"

#include <Eigen/SparseCholesky>
#include <cmath>
#include <stdexcept>

#include "tpjm/covariance.hpp"
#include "tpjm/numeric.hpp"

namespace tpjm {

double PrecisionStructure::log_det() const {
  if (!cached_log_det_) {
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(Q);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("PrecisionStructure: Q is not SPD");
    double ld = 0.0;
    const auto& L = llt.matrixL();
    for (int k = 0; k < Q.rows(); ++k)
      ld += 2.0 * std::log(L.nestedExpression().coeff(k, k));
    cached_log_det_ = std::make_shared<double>(ld);
  }
  return *cached_log_det_;
}

Eigen::SparseMatrix<double> rw_structure(int m, int order) {
  if (order != 1 && order != 2)
    throw std::invalid_argument("rw_structure: order must be 1 or 2");
  if (m < order + 1)
    throw std::invalid_argument("rw_structure: too few coefficients");
  int nrows = m - order;
  Eigen::SparseMatrix<double> D(nrows, m);
  std::vector<Eigen::Triplet<double>> trips;
  for (int r = 0; r < nrows; ++r) {
    if (order == 1) {
      trips.emplace_back(r, r, -1.0);
      trips.emplace_back(r, r + 1, 1.0);
    } else {
      trips.emplace_back(r, r, 1.0);
      trips.emplace_back(r, r + 1, -2.0);
      trips.emplace_back(r, r + 2, 1.0);
    }
  }
  D.setFromTriplets(trips.begin(), trips.end());
  Eigen::SparseMatrix<double> DtD = Eigen::SparseMatrix<double>(D.transpose()) * D;
  return DtD;
}

PrecisionStructure assemble_Q(const HyperParams& theta, const TpjmSpec& spec,
                              const PriorConfig& priors, int n_subjects) {
  const int d = spec.re_dim();
  LatentLayout layout = make_layout(spec, n_subjects);

  Eigen::MatrixXd sigma = cov_from_params(theta.re_log_prec, theta.re_z);
  Eigen::MatrixXd q_ab = sigma.inverse();

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(n_subjects * d * d + layout.n_alpha + layout.n_beta +
                layout.n_gamma + 3 * layout.n_lambda);
  for (int i = 0; i < n_subjects; ++i)
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c)
        trips.emplace_back(layout.re_index(i, r), layout.re_index(i, c),
                           q_ab(r, c));

  for (int j = 0; j < layout.n_alpha; ++j)
    trips.emplace_back(layout.alpha_index(j), layout.alpha_index(j),
                       priors.fixed_effect_prec);
  for (int j = 0; j < layout.n_beta; ++j)
    trips.emplace_back(layout.beta_index(j), layout.beta_index(j),
                       priors.fixed_effect_prec);
  for (int j = 0; j < layout.n_gamma; ++j)
    trips.emplace_back(layout.gamma_index(j), layout.gamma_index(j),
                       priors.fixed_effect_prec);

  double tau_rw = std::exp(theta.log_prec_rw);
  Eigen::SparseMatrix<double> dtd = rw_structure(layout.n_lambda, spec.rw_order);
  for (int k = 0; k < dtd.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(dtd, k); it; ++it)
      trips.emplace_back(layout.lambda_index(static_cast<int>(it.row())),
                         layout.lambda_index(static_cast<int>(it.col())),
                         tau_rw * it.value());
  for (int k = 0; k < layout.n_lambda; ++k)
    trips.emplace_back(layout.lambda_index(k), layout.lambda_index(k),
                       priors.lambda_anchor);

  PrecisionStructure out;
  out.Q.resize(layout.size(), layout.size());
  out.Q.setFromTriplets(trips.begin(), trips.end());
  out.re_block = q_ab;
  return out;
}

Eigen::SparseMatrix<double> assemble_A(
    const std::vector<AugmentedObservation>& rows, int latent_dim,
    const Eigen::VectorXd& scales) {
  std::vector<Eigen::Triplet<double>> trips;
  for (int r = 0; r < static_cast<int>(rows.size()); ++r) {
    for (const auto& e : rows[r].entries) {
      if (e.col < 0 || e.col >= latent_dim)
        throw std::out_of_range("assemble_A: latent index out of range");
      double coef = e.coef;
      if (e.scale_slot >= 0) {
        if (e.scale_slot >= scales.size())
          throw std::out_of_range("assemble_A: scale slot out of range");
        coef *= scales[e.scale_slot];
      }
      if (coef != 0.0) trips.emplace_back(r, e.col, coef);
    }
  }
  Eigen::SparseMatrix<double> A(static_cast<int>(rows.size()), latent_dim);
  A.setFromTriplets(trips.begin(), trips.end());
  return A;
}

double pc_prec_logdensity(double tau, double w, double v) {
  if (!(tau > 0.0)) throw std::domain_error("pc_prec_logdensity: tau <= 0");
  if (!(w > 0.0) || !(v > 0.0 && v < 1.0))
    throw std::domain_error("pc_prec_logdensity: need w > 0 and 0 < v < 1");
  double rho = -std::log(v) / w;
  return std::log(rho / 2.0) - 1.5 * std::log(tau) - rho / std::sqrt(tau);
}

namespace {

double gaussian_logdensity(double x, double prec) {
  return 0.5 * std::log(prec / (2.0 * M_PI)) - 0.5 * prec * x * x;
}

// density of log tau when tau has the PC prior (Jacobian dtau/dlogtau = tau)
double pc_log_prec_logdensity(double log_tau, const PcPair& pc) {
  double tau = std::exp(log_tau);
  return pc_prec_logdensity(tau, pc.w, pc.v) + log_tau;
}

}  // namespace

double log_prior_theta(const HyperParams& theta, const PriorConfig& priors) {
  double lp = 0.0;
  lp += pc_log_prec_logdensity(theta.log_prec_eps, priors.pc_eps);
  lp += pc_log_prec_logdensity(theta.log_prec_rw, priors.pc_rw);
  for (int k = 0; k < theta.re_log_prec.size(); ++k)
    lp += pc_log_prec_logdensity(theta.re_log_prec[k], priors.pc_re_at(k));
  double z_prec = 1.0 / (priors.corr_prior_sd * priors.corr_prior_sd);
  for (int k = 0; k < theta.re_z.size(); ++k)
    lp += gaussian_logdensity(theta.re_z[k], z_prec);
  for (int k = 0; k < theta.assoc.size(); ++k)
    lp += gaussian_logdensity(theta.assoc[k], priors.assoc_prec);
  return lp;
}

}  // namespace tpjm
