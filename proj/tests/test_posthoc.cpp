#include <doctest.h>

#include <cmath>

#include "tpjm/numeric.hpp"
#include "tpjm/posthoc.hpp"

using namespace tpjm;

namespace {
Eigen::MatrixXd gercor_sigma() {
  // Table-4 random-effect structure of the first application
  Eigen::Vector3d sd(2.77, 0.59, 0.46);
  Eigen::Matrix3d corr;
  corr << 1.00, 0.52, 0.48,
          0.52, 1.00, -0.22,
          0.48, -0.22, 1.00;
  return sd.asDiagonal() * corr * sd.asDiagonal();
}
}  // namespace

TEST_CASE("conditional means match the 1-d truncation formula") {
  Eigen::MatrixXd sigma = gercor_sigma();
  SubgroupQuery q;
  q.component = 2;  // b1
  q.threshold = 1.0;  // one SD = 0.46
  q.mc_draws = 200000;
  q.seed = 42;
  ConditionalMeans cm = conditional_re_means(sigma, q);
  CHECK(cm.threshold_abs == doctest::Approx(0.46).epsilon(1e-12));

  // analytic: rho_jk sigma_j phi(1)/(1-Phi(1)), mills ratio ~ 1.52514
  double mills = normal_pdf(1.0) / normal_sf(1.0);
  CHECK(conditional_mean_analytic(sigma, 2, q) ==
        doctest::Approx(0.46 * mills).epsilon(1e-10));
  CHECK(conditional_mean_analytic(sigma, 1, q) ==
        doctest::Approx(-0.22 * 0.59 * mills).epsilon(1e-10));
  CHECK(conditional_mean_analytic(sigma, 0, q) ==
        doctest::Approx(0.48 * 2.77 * mills).epsilon(1e-10));

  for (int j = 0; j < 3; ++j) {
    double analytic = conditional_mean_analytic(sigma, j, q);
    CHECK(std::abs(cm.means[j] - analytic) <= 3.0 * cm.mc_se[j]);
  }
  // the paper's own numbers sit within MC tolerance of the analytic values
  CHECK(conditional_mean_analytic(sigma, 0, q) == doctest::Approx(2.03).epsilon(0.01));
  CHECK(conditional_mean_analytic(sigma, 1, q) == doctest::Approx(-0.19).epsilon(0.06));
  CHECK(conditional_mean_analytic(sigma, 2, q) == doctest::Approx(0.70).epsilon(0.01));
}

TEST_CASE("zero correlation leaves other components at zero") {
  Eigen::MatrixXd sigma = Eigen::Vector3d(4.0, 0.25, 1.0).asDiagonal();
  SubgroupQuery q;
  q.component = 0;
  q.threshold = 0.5;
  q.mc_draws = 100000;
  q.seed = 3;
  ConditionalMeans cm = conditional_re_means(sigma, q);
  CHECK(std::abs(cm.means[1]) <= 4.0 * cm.mc_se[1]);
  CHECK(std::abs(cm.means[2]) <= 4.0 * cm.mc_se[2]);
  CHECK(cm.means[0] > 0.5);
  CHECK(conditional_mean_analytic(sigma, 1, q) == 0.0);
}

TEST_CASE("threshold at minus infinity removes the conditioning") {
  Eigen::MatrixXd sigma = gercor_sigma();
  SubgroupQuery q;
  q.component = 2;
  q.absolute = true;
  q.threshold = -10.0;  // accepts everything
  q.mc_draws = 100000;
  q.seed = 9;
  ConditionalMeans cm = conditional_re_means(sigma, q);
  CHECK(cm.accepted == q.mc_draws);
  for (int j = 0; j < 3; ++j)
    CHECK(std::abs(cm.means[j]) <= 4.0 * cm.mc_se[j]);
}

TEST_CASE("extreme threshold is rejected") {
  Eigen::MatrixXd sigma = gercor_sigma();
  SubgroupQuery q;
  q.component = 1;
  q.threshold = 6.0;  // P[Z > 6] < 1e-6
  q.mc_draws = 100000;
  CHECK_THROWS_AS(conditional_re_means(sigma, q), std::invalid_argument);
  q.mc_draws = 100;
  q.threshold = 1.0;
  CHECK_THROWS_AS(conditional_re_means(sigma, q), std::invalid_argument);
}

TEST_CASE("hazard ratio arithmetic reproduces the worked examples") {
  Eigen::Vector3d phi(0.12, 0.72, 0.87);
  Eigen::Vector3d means(2.15, -0.19, 0.69);
  HazardRatio hr = subgroup_hazard_ratio(phi, Eigen::MatrixXd(), means, 0, 1);
  CHECK(hr.point == doctest::Approx(std::exp(0.7215)).epsilon(1e-12));
  CHECK(hr.point == doctest::Approx(2.06).epsilon(0.005));

  Eigen::Vector3d phi2(0.18, 0.34, 0.27);
  Eigen::Vector3d means2(2.26, -0.17, 0.66);
  HazardRatio hr2 = subgroup_hazard_ratio(phi2, Eigen::MatrixXd(), means2, 0, 1);
  CHECK(hr2.point == doctest::Approx(1.69).epsilon(0.005));

  // phi = 0 gives HR exactly 1
  HazardRatio hr0 = subgroup_hazard_ratio(Eigen::Vector3d::Zero(),
                                          Eigen::MatrixXd(), means, 0, 1);
  CHECK(hr0.point == 1.0);
}

TEST_CASE("hazard ratio invariant under joint sign flip") {
  Eigen::Vector3d phi(0.12, 0.72, 0.87);
  Eigen::Vector3d means(2.15, -0.19, 0.69);
  HazardRatio a = subgroup_hazard_ratio(phi, Eigen::MatrixXd(), means, 0, 1);
  HazardRatio b = subgroup_hazard_ratio(-phi, Eigen::MatrixXd(), -means, 0, 1);
  CHECK(a.point == b.point);
}

TEST_CASE("hazard ratio interval from parameter draws") {
  Eigen::Vector3d phi(0.12, 0.72, 0.87);
  Eigen::Vector3d means(2.15, -0.19, 0.69);
  Eigen::Matrix3d cov = 0.02 * Eigen::Matrix3d::Identity();
  HazardRatio hr = subgroup_hazard_ratio(phi, cov, means, 200000, 7);
  CHECK(hr.lo95 < hr.point);
  CHECK(hr.hi95 > hr.point);
  // log HR ~ N(0.7215, m' C m): check the quantiles against the closed form
  double sd = std::sqrt((means.cwiseProduct(means) * 0.02).sum());
  CHECK(std::log(hr.lo95) ==
        doctest::Approx(0.7215 - 1.959964 * sd).epsilon(0.02));
  CHECK(std::log(hr.hi95) ==
        doctest::Approx(0.7215 + 1.959964 * sd).epsilon(0.02));
}
