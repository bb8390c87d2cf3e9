#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <vector>

#include "tpjm/numeric.hpp"

namespace tpjm {

// Deterministic seed mixing so replicate substreams are independent and
// reproducible from one master seed.
inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Thin wrapper around mt19937_64 with our own distribution transforms:
// the std:: distributions are not bit-reproducible across implementations,
// the engine itself is.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // uniform on (0, 1), 53-bit resolution, never exactly 0 or 1
  double uniform() {
    double u = (eng_() >> 11) * 0x1.0p-53;
    return u == 0.0 ? 0x1.0p-54 : u;
  }

  double normal() { return inv_normal_cdf(uniform()); }

  bool bernoulli(double p) { return uniform() < p; }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  // draw ~ N(0, Sigma) given lower Cholesky factor of Sigma
  Eigen::VectorXd mvn(const Eigen::MatrixXd& chol_lower) {
    Eigen::VectorXd z(chol_lower.rows());
    for (int i = 0; i < z.size(); ++i) z[i] = normal();
    return chol_lower * z;
  }

private:
  std::mt19937_64 eng_;
};

// Randomized Halton sequence in d dimensions (d <= 6), Cranley-Patterson
// rotation fixed by the seed. Used for the quasi-random Monte-Carlo draws.
class Halton {
public:
  Halton(int dim, std::uint64_t seed);

  // point index starts at 1 internally (skips the degenerate origin)
  Eigen::VectorXd point(std::size_t index) const;

private:
  int dim_;
  std::vector<double> shift_;
};

// R standard normal quasi-draws arranged d x n_points, antithetic pairs
// (column 2k+1 = -column 2k). n_points must be even.
Eigen::MatrixXd quasi_normal_draws(int dim, int n_points, std::uint64_t seed);

}  // namespace tpjm
