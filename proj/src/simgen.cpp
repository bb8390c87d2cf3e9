#include "tpjm/simgen.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <stdexcept>

#include "tpjm/numeric.hpp"
#include "tpjm/rng.hpp"

namespace tpjm {

std::map<std::string, double> TrueParams::named(const TpjmSpec& spec) const {
  std::map<std::string, double> out;
  for (int j = 0; j < alpha.size(); ++j)
    out["alpha" + std::to_string(j)] = alpha[j];
  for (int j = 0; j < beta.size(); ++j)
    out["beta" + std::to_string(j)] = beta[j];
  out["sigma_eps"] = sigma_eps;
  for (int j = 0; j < gamma.size(); ++j)
    out["gamma" + std::to_string(j)] = gamma[j];
  const int d = spec.re_dim();
  const char* re_names[3] = {"a", "b0", "b1"};
  for (int k = 0; k < d; ++k)
    out[std::string("phi_") + re_names[k]] = phi[k];
  for (int k = 0; k < d; ++k)
    out[std::string("sigma_") + re_names[k]] = std::sqrt(sigma_re(k, k));
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      out[std::string("rho_") + re_names[i] + re_names[j]] =
          sigma_re(i, j) / std::sqrt(sigma_re(i, i) * sigma_re(j, j));
  return out;
}

ScenarioConfig scenario_config(int scenario, std::uint64_t seed) {
  if (scenario < 1 || scenario > 3)
    throw std::invalid_argument("scenario must be 1, 2 or 3");

  ScenarioConfig cfg;
  cfg.seed = seed;
  cfg.n = (scenario == 3) ? 500 : 200;

  TpjmSpec& spec = cfg.spec;
  spec.binary_terms = {parse_term("1"), parse_term("time"), parse_term("trt"),
                       parse_term("time:trt")};
  spec.continuous_terms = spec.binary_terms;
  spec.survival_terms = {parse_term("trt")};
  spec.re_structure = (scenario == 1) ? ReStructure::intercepts_only
                                      : ReStructure::intercept_plus_slope;
  spec.baseline_bins = 15;
  spec.follow_up_max = 4.0;
  spec.rw_order = 2;

  TrueParams& tp = cfg.truth;
  tp.alpha.resize(4);
  tp.alpha << 4.0, -0.5, -0.5, 0.5;
  tp.beta.resize(4);
  tp.beta << 2.0, -0.3, -0.3, 0.3;
  tp.sigma_eps = 0.3;
  tp.gamma.resize(1);
  tp.gamma << 0.2;

  const int d = spec.re_dim();
  tp.phi = Eigen::VectorXd::Ones(d);
  if (d == 2) {
    Eigen::Vector2d sd(1.0, 0.5);
    Eigen::Matrix2d corr;
    corr << 1.0, 0.5, 0.5, 1.0;
    tp.sigma_re = sd.asDiagonal() * corr * sd.asDiagonal();
  } else {
    Eigen::Vector3d sd(1.0, 0.5, 0.5);
    Eigen::Matrix3d corr;
    corr << 1.0, 0.5, 0.5,
            0.5, 1.0, -0.2,
            0.5, -0.2, 1.0;
    tp.sigma_re = sd.asDiagonal() * corr * sd.asDiagonal();
  }

  cfg.visit_schedule.clear();
  for (int k = 0; k <= 16; ++k) cfg.visit_schedule.push_back(0.25 * k);
  return cfg;
}

std::vector<SubjectData> generate_dataset(const ScenarioConfig& cfg) {
  const TpjmSpec& spec = cfg.spec;
  const int d = spec.re_dim();
  if (cfg.truth.sigma_re.rows() != d)
    throw std::invalid_argument("generate_dataset: RE covariance dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(cfg.truth.sigma_re);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("generate_dataset: RE covariance not SPD");
  Eigen::MatrixXd chol = llt.matrixL();

  Rng rng(cfg.seed);
  std::vector<SubjectData> data;
  data.reserve(cfg.n);

  for (int i = 0; i < cfg.n; ++i) {
    SubjectData subj;
    subj.id = i + 1;
    subj.covariates["trt"] = rng.bernoulli(0.5) ? 1.0 : 0.0;

    Eigen::VectorXd re = rng.mvn(chol);
    double a = re[0];
    double b0 = re[1];
    double b1 = (d == 3) ? re[2] : 0.0;

    double eta_s = cfg.truth.phi.dot(re);
    for (int j = 0; j < cfg.truth.gamma.size(); ++j)
      eta_s += cfg.truth.gamma[j] * spec.survival_terms[j].eval(0.0, subj);
    double rate = cfg.baseline_scale * std::exp(eta_s);
    double t_event = rng.exponential(rate);
    if (t_event > cfg.horizon) {
      subj.surv_time = cfg.horizon;
      subj.event = 0;
    } else {
      subj.surv_time = t_event;
      subj.event = 1;
    }

    for (double t : cfg.visit_schedule) {
      if (t > subj.surv_time) break;
      double eta_b = a;
      for (int j = 0; j < cfg.truth.alpha.size(); ++j)
        eta_b += cfg.truth.alpha[j] * spec.binary_terms[j].eval(t, subj);
      VisitRecord v;
      v.time = t;
      if (rng.bernoulli(expit(eta_b))) {
        double eta_c = b0 + b1 * t;
        for (int j = 0; j < cfg.truth.beta.size(); ++j)
          eta_c += cfg.truth.beta[j] * spec.continuous_terms[j].eval(t, subj);
        v.value = std::exp(eta_c + cfg.truth.sigma_eps * rng.normal());
      } else {
        v.value = 0.0;
      }
      subj.visits.push_back(v);
    }
    subj.validate();
    data.push_back(std::move(subj));
  }
  return data;
}

}  // namespace tpjm
