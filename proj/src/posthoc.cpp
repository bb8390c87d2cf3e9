#include "tpjm/posthoc.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "tpjm/numeric.hpp"
#include "tpjm/rng.hpp"

namespace tpjm {

namespace {
double threshold_abs(const Eigen::MatrixXd& sigma, const SubgroupQuery& q) {
  if (q.absolute) return q.threshold;
  return q.threshold * std::sqrt(sigma(q.component, q.component));
}
}  // namespace

ConditionalMeans conditional_re_means(const Eigen::MatrixXd& sigma,
                                      const SubgroupQuery& query) {
  const int d = static_cast<int>(sigma.rows());
  if (query.component < 0 || query.component >= d)
    throw std::invalid_argument("conditional_re_means: component out of range");
  if (query.mc_draws < 10000)
    throw std::invalid_argument("conditional_re_means: mc_draws must be >= 1e4");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("conditional_re_means: Sigma not SPD");

  const double c = threshold_abs(sigma, query);
  const double sk = std::sqrt(sigma(query.component, query.component));
  double accept_rate =
      query.above ? normal_sf(c / sk) : normal_cdf(c / sk);
  if (accept_rate < 1e-6)
    throw std::invalid_argument(
        "conditional_re_means: threshold too extreme, acceptance rate < 1e-6");

  Eigen::MatrixXd chol = llt.matrixL();
  Rng rng(query.seed);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd sum2 = Eigen::VectorXd::Zero(d);
  long accepted = 0;
  for (long i = 0; i < query.mc_draws; ++i) {
    Eigen::VectorXd re = rng.mvn(chol);
    bool in = query.above ? re[query.component] > c : re[query.component] < c;
    if (!in) continue;
    ++accepted;
    sum += re;
    sum2 += re.cwiseProduct(re);
  }
  if (accepted < 2)
    throw std::runtime_error("conditional_re_means: no accepted draws");

  ConditionalMeans out;
  out.accepted = accepted;
  out.threshold_abs = c;
  out.means = sum / static_cast<double>(accepted);
  out.mc_se.resize(d);
  for (int j = 0; j < d; ++j) {
    double var = sum2[j] / accepted - out.means[j] * out.means[j];
    out.mc_se[j] = std::sqrt(std::max(var, 0.0) / accepted);
  }
  return out;
}

double conditional_mean_analytic(const Eigen::MatrixXd& sigma, int j,
                                 const SubgroupQuery& query) {
  const int k = query.component;
  const double c = threshold_abs(sigma, query);
  const double sk = std::sqrt(sigma(k, k));
  const double sj = std::sqrt(sigma(j, j));
  const double rho = sigma(j, k) / (sj * sk);
  const double z = c / sk;
  // E[X_j | X_k > c] = rho sigma_j phi(z) / (1 - Phi(z)); mirrored below
  double mills = query.above ? normal_pdf(z) / normal_sf(z)
                             : -normal_pdf(z) / normal_cdf(z);
  return rho * sj * mills;
}

HazardRatio subgroup_hazard_ratio(const Eigen::VectorXd& phi_mean,
                                  const Eigen::MatrixXd& phi_cov,
                                  const Eigen::VectorXd& cond_means,
                                  long draws, std::uint64_t seed) {
  if (phi_mean.size() != cond_means.size())
    throw std::invalid_argument("subgroup_hazard_ratio: dimension mismatch");
  HazardRatio hr;
  hr.point = std::exp(phi_mean.dot(cond_means));
  if (draws <= 0 || phi_cov.size() == 0) {
    hr.lo95 = hr.hi95 = hr.point;
    return hr;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(phi_cov);
  if (llt.info() != Eigen::Success) {
    hr.lo95 = hr.hi95 = hr.point;
    return hr;
  }
  Eigen::MatrixXd chol = llt.matrixL();
  Rng rng(seed);
  std::vector<double> log_hr(draws);
  for (long i = 0; i < draws; ++i) {
    Eigen::VectorXd phi = phi_mean + rng.mvn(chol);
    log_hr[i] = phi.dot(cond_means);
  }
  std::sort(log_hr.begin(), log_hr.end());
  auto q = [&](double p) {
    double idx = p * (draws - 1);
    long lo = static_cast<long>(idx);
    if (lo + 1 >= draws) return log_hr.back();
    double f = idx - lo;
    return log_hr[lo] * (1.0 - f) + log_hr[lo + 1] * f;
  };
  hr.lo95 = std::exp(q(0.025));
  hr.hi95 = std::exp(q(0.975));
  return hr;
}

}  // namespace tpjm
