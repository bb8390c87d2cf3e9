#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "tpjm/assembly.hpp"
#include "tpjm/covariance.hpp"
#include "tpjm/numeric.hpp"

using namespace tpjm;

namespace {
TpjmSpec scenario1_spec(int bins = 15, int rw_order = 2) {
  TpjmSpec spec;
  spec.binary_terms = {parse_term("1"), parse_term("time"), parse_term("trt"),
                       parse_term("time:trt")};
  spec.continuous_terms = spec.binary_terms;
  spec.survival_terms = {parse_term("trt")};
  spec.re_structure = ReStructure::intercepts_only;
  spec.baseline_bins = bins;
  spec.follow_up_max = 4.0;
  spec.rw_order = rw_order;
  return spec;
}

SubjectData make_subject(int id, double trt, double surv, int event,
                         std::vector<VisitRecord> visits) {
  SubjectData s;
  s.id = id;
  s.surv_time = surv;
  s.event = event;
  s.visits = std::move(visits);
  s.covariates["trt"] = trt;
  return s;
}
}  // namespace

TEST_CASE("assemble_Q: identity RE blocks") {
  TpjmSpec spec = scenario1_spec(4, 1);
  HyperParams theta = HyperParams::zeros(2);  // Sigma = I
  PriorConfig priors;
  auto ps = assemble_Q(theta, spec, priors, 2);
  LatentLayout l = make_layout(spec, 2);
  for (int i = 0; i < 2; ++i)
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c)
        CHECK(ps.Q.coeff(l.re_index(i, r), l.re_index(i, c)) ==
              doctest::Approx(r == c ? 1.0 : 0.0));
}

TEST_CASE("assemble_Q: scenario-1 RE block is the 2x2 inverse") {
  TpjmSpec spec = scenario1_spec();
  HyperParams theta = HyperParams::zeros(2);
  theta.re_log_prec << 0.0, 2.0 * std::log(2.0);
  theta.re_z << std::atanh(0.5);
  PriorConfig priors;
  auto ps = assemble_Q(theta, spec, priors, 1);

  // oracle: explicit 2x2 inverse of [[1, .25], [.25, .25]]
  double det = 1.0 * 0.25 - 0.25 * 0.25;
  Eigen::Matrix2d inv;
  inv << 0.25 / det, -0.25 / det, -0.25 / det, 1.0 / det;
  LatentLayout l = make_layout(spec, 1);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c)
      CHECK(ps.Q.coeff(l.re_index(0, r), l.re_index(0, c)) ==
            doctest::Approx(inv(r, c)).epsilon(1e-10));
  CHECK(ps.re_block(0, 0) == doctest::Approx(4.0 / 3.0).epsilon(1e-6));
  CHECK(ps.re_block(1, 1) == doctest::Approx(16.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("assemble_Q: RW1 block is the tridiagonal difference penalty") {
  TpjmSpec spec = scenario1_spec(4, 1);
  HyperParams theta = HyperParams::zeros(2);  // tau_lambda = 1
  PriorConfig priors;
  priors.lambda_anchor = 1e-5;
  auto ps = assemble_Q(theta, spec, priors, 1);
  LatentLayout l = make_layout(spec, 1);
  Eigen::Matrix4d expected;
  expected << 1, -1, 0, 0, -1, 2, -1, 0, 0, -1, 2, -1, 0, 0, -1, 1;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      double want = expected(r, c) + (r == c ? 1e-5 : 0.0);
      CHECK(ps.Q.coeff(l.lambda_index(r), l.lambda_index(c)) ==
            doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("rw_structure rank deficiency equals the order") {
  for (int order : {1, 2}) {
    Eigen::MatrixXd dtd = Eigen::MatrixXd(rw_structure(8, order));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dtd);
    int zeros = 0;
    for (int i = 0; i < 8; ++i)
      if (std::abs(es.eigenvalues()[i]) < 1e-10) ++zeros;
    CHECK(zeros == order);
  }
}

TEST_CASE("assemble_Q: permuting subjects permutes blocks") {
  TpjmSpec spec = scenario1_spec(4, 1);
  HyperParams theta = HyperParams::zeros(2);
  theta.re_log_prec << 0.5, -0.2;
  theta.re_z << 0.3;
  PriorConfig priors;
  auto ps = assemble_Q(theta, spec, priors, 3);
  LatentLayout l = make_layout(spec, 3);
  // identical blocks for every subject
  for (int i = 1; i < 3; ++i)
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c)
        CHECK(ps.Q.coeff(l.re_index(i, r), l.re_index(i, c)) ==
              doctest::Approx(ps.Q.coeff(l.re_index(0, r), l.re_index(0, c))));
}

TEST_CASE("assemble_A reproduces the three linear predictors") {
  TpjmSpec spec = scenario1_spec(5, 1);
  auto data = std::vector<SubjectData>{
      make_subject(1, 1.0, 2.5, 1, {{0.0, 3.2}, {0.5, 0.0}, {1.0, 1.4}}),
      make_subject(2, 0.0, 3.7, 0, {{0.0, 1.0}, {2.0, 2.0}})};
  LatentLayout layout = make_layout(spec, 2);
  auto rows = augment_dataset(data, spec, layout);

  Eigen::VectorXd phi(2);
  phi << 0.8, -0.3;
  auto A = assemble_A(rows, layout.size(), phi);

  std::mt19937_64 eng(5);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd u(layout.size());
  for (int i = 0; i < u.size(); ++i) u[i] = nd(eng);
  Eigen::VectorXd eta = A * u;

  // direct loop evaluation of the model displays
  int r = 0;
  for (int i = 0; i < 2; ++i) {
    const auto& subj = data[i];
    for (const auto& v : subj.visits) {
      double eta_b = u[layout.re_index(i, 0)];
      for (int j = 0; j < 4; ++j)
        eta_b += spec.binary_terms[j].eval(v.time, subj) * u[layout.alpha_index(j)];
      CHECK(eta[r] == doctest::Approx(eta_b).epsilon(1e-12));
      ++r;
      if (v.is_positive()) {
        double eta_c = u[layout.re_index(i, 1)];
        for (int j = 0; j < 4; ++j)
          eta_c += spec.continuous_terms[j].eval(v.time, subj) *
                   u[layout.beta_index(j)];
        CHECK(eta[r] == doctest::Approx(eta_c).epsilon(1e-12));
        ++r;
      }
    }
    double width = spec.bin_width();
    int n_seg = static_cast<int>(std::ceil(subj.surv_time / width - 1e-12));
    for (int k = 0; k < n_seg; ++k) {
      double eta_s = phi[0] * u[layout.re_index(i, 0)] +
                     phi[1] * u[layout.re_index(i, 1)] +
                     subj.covariate("trt") * u[layout.gamma_index(0)] +
                     u[layout.lambda_index(k)];
      CHECK(eta[r] == doctest::Approx(eta_s).epsilon(1e-12));
      ++r;
    }
  }
  CHECK(r == static_cast<int>(rows.size()));
}

TEST_CASE("assemble_A: zero association decouples survival from REs") {
  TpjmSpec spec = scenario1_spec(5, 1);
  auto data = std::vector<SubjectData>{
      make_subject(1, 1.0, 2.5, 1, {{0.0, 3.2}})};
  LatentLayout layout = make_layout(spec, 1);
  auto rows = augment_dataset(data, spec, layout);
  auto A = assemble_A(rows, layout.size(), Eigen::Vector2d::Zero());
  for (int r = 0; r < static_cast<int>(rows.size()); ++r) {
    if (rows[r].kind != ObsKind::surv_segment) continue;
    CHECK(A.coeff(r, layout.re_index(0, 0)) == 0.0);
    CHECK(A.coeff(r, layout.re_index(0, 1)) == 0.0);
  }
}

TEST_CASE("pc prior: scaling parameter and log density") {
  // rho = -ln(v)/w; (w=1, v=e^-1) -> rho = 1
  double tau = 2.0;
  double expect = std::log(0.5) - 1.5 * std::log(tau) - 1.0 / std::sqrt(tau);
  CHECK(pc_prec_logdensity(tau, 1.0, std::exp(-1.0)) ==
        doctest::Approx(expect).epsilon(1e-12));
  CHECK_THROWS_AS(pc_prec_logdensity(-1.0, 1.0, 0.5), std::domain_error);
  CHECK_THROWS_AS(pc_prec_logdensity(1.0, 1.0, 1.5), std::domain_error);
}

namespace {
// numeric integral of the pc density over tau in (0, inf), substitution
// tau = (x/(1-x))^2 maps to x in (0,1)
double pc_mass(double w, double v, double upper_tau) {
  auto integrand = [&](double x) {
    double tau = std::pow(x / (1.0 - x), 2.0);
    if (!(tau > 0.0) || !std::isfinite(tau)) return 0.0;
    if (tau >= upper_tau) return 0.0;
    double jac = 2.0 * x / std::pow(1.0 - x, 3.0);
    return std::exp(pc_prec_logdensity(tau, w, v)) * jac;
  };
  double hi = upper_tau == std::numeric_limits<double>::infinity()
                  ? 1.0 - 1e-9
                  : std::sqrt(upper_tau) / (1.0 + std::sqrt(upper_tau));
  return adaptive_simpson(integrand, 1e-12, hi, 1e-10);
}
}  // namespace

TEST_CASE("pc prior integrates to one and satisfies the tail identity") {
  double total = pc_mass(1.0, 0.01, std::numeric_limits<double>::infinity());
  CHECK(total == doctest::Approx(1.0).epsilon(1e-6));

  // P[sigma > w] = P[tau < w^-2] = v
  double tail = pc_mass(0.5, 0.05, 1.0 / (0.5 * 0.5));
  CHECK(tail == doctest::Approx(0.05).epsilon(1e-6));
}

TEST_CASE("log_prior_theta: additivity, phi term, jacobian") {
  PriorConfig priors;
  HyperParams theta = HyperParams::zeros(2);
  theta.assoc << 1.0, 0.0;
  double lp0 = log_prior_theta(theta, priors);
  CHECK(std::isfinite(lp0));

  // phi term: log N(1 | 0, 1000)
  HyperParams theta_zero_phi = theta;
  theta_zero_phi.assoc << 0.0, 0.0;
  double lp_zero = log_prior_theta(theta_zero_phi, priors);
  double expected_diff = -0.5 * 1e-3 * 1.0;  // only the quadratic part changes
  CHECK(lp0 - lp_zero == doctest::Approx(expected_diff).epsilon(1e-10));

  // changing one tau changes only its own term, by the pc formula + jacobian
  HyperParams theta2 = theta;
  theta2.log_prec_eps = 1.3;
  double d_actual = log_prior_theta(theta2, priors) - lp0;
  auto pc_log = [&](double lt) {
    return pc_prec_logdensity(std::exp(lt), priors.pc_eps.w, priors.pc_eps.v) + lt;
  };
  CHECK(d_actual == doctest::Approx(pc_log(1.3) - pc_log(0.0)).epsilon(1e-10));
}
