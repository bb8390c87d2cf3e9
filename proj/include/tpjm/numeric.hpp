#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>

namespace tpjm {

// Compensated (Kahan) accumulator so that large sums are reproducible
// independently of chunking order.
class KahanSum {
public:
  void add(double x) {
    double y = x - comp_;
    double t = sum_ + y;
    comp_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double expit(double x) {
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow for large |x|
inline double log1pexp(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

inline double normal_pdf(double x) {
  static const double inv_sqrt_2pi = 0.3989422804014326779;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x * M_SQRT1_2);
}

// Upper tail P[Z > x], accurate far in the tail.
inline double normal_sf(double x) {
  return 0.5 * std::erfc(x * M_SQRT1_2);
}

// Inverse standard normal CDF, Wichura's AS241 (PPND16).
double inv_normal_cdf(double p);

// Adaptive Simpson quadrature on [a, b] to absolute tolerance tol.
double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double tol, int max_depth = 50);

// theta point outside the support of the model (e.g. non-SPD covariance):
// callers treat it as zero posterior density.
class RejectionError : public std::runtime_error {
public:
  explicit RejectionError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tpjm
