#include "tpjm/rng.hpp"

#include <stdexcept>

namespace tpjm {

namespace {
constexpr int kPrimes[6] = {2, 3, 5, 7, 11, 13};

double radical_inverse(std::size_t n, int base) {
  double inv = 1.0 / base;
  double f = inv;
  double r = 0.0;
  while (n > 0) {
    r += f * static_cast<double>(n % base);
    n /= base;
    f *= inv;
  }
  return r;
}
}  // namespace

Halton::Halton(int dim, std::uint64_t seed) : dim_(dim) {
  if (dim < 1 || dim > 6) throw std::invalid_argument("Halton: dim must be in [1,6]");
  Rng rng(seed);
  shift_.resize(dim);
  for (int k = 0; k < dim; ++k) shift_[k] = rng.uniform();
}

Eigen::VectorXd Halton::point(std::size_t index) const {
  Eigen::VectorXd p(dim_);
  for (int k = 0; k < dim_; ++k) {
    double u = radical_inverse(index + 1, kPrimes[k]) + shift_[k];
    if (u >= 1.0) u -= 1.0;
    // keep strictly inside (0,1) for the normal quantile transform
    if (u < 1e-15) u = 1e-15;
    if (u > 1.0 - 1e-15) u = 1.0 - 1e-15;
    p[k] = u;
  }
  return p;
}

Eigen::MatrixXd quasi_normal_draws(int dim, int n_points, std::uint64_t seed) {
  if (n_points < 2 || n_points % 2 != 0)
    throw std::invalid_argument("quasi_normal_draws: n_points must be even and >= 2");
  Halton seq(dim, seed);
  Eigen::MatrixXd z(dim, n_points);
  int half = n_points / 2;
  for (int q = 0; q < half; ++q) {
    Eigen::VectorXd u = seq.point(static_cast<std::size_t>(q));
    for (int k = 0; k < dim; ++k) {
      double v = inv_normal_cdf(u[k]);
      z(k, 2 * q) = v;
      z(k, 2 * q + 1) = -v;
    }
  }
  return z;
}

}  // namespace tpjm
