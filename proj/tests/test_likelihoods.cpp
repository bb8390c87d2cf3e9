#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "oracles.hpp"
#include "tpjm/likelihood.hpp"
#include "tpjm/numeric.hpp"

using namespace tpjm;

TEST_CASE("binary kernel values") {
  LogLikTriple t = binary_loglik(0.0, 1.0);
  CHECK(t.value == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
  CHECK(t.d1 == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(t.d2 == doctest::Approx(-0.25).epsilon(1e-12));

  t = binary_loglik(4.0, 1.0);
  CHECK(t.value == doctest::Approx(-std::log1p(std::exp(-4.0))).epsilon(1e-14));

  t = binary_loglik(-35.0, 0.0);
  CHECK(std::isfinite(t.value));
  CHECK(t.value == doctest::Approx(-std::exp(-35.0)).epsilon(1e-6));

  t = binary_loglik(800.0, 1.0);  // no overflow far out
  CHECK(std::isfinite(t.value));
  CHECK(t.value == doctest::Approx(0.0));
}

TEST_CASE("gaussian kernel values") {
  double tau = 1.0 / (0.3 * 0.3);
  LogLikTriple t = gaussian_loglik(1.0, 1.0, tau);
  CHECK(t.value == doctest::Approx(0.5 * std::log(tau / (2 * M_PI))).epsilon(1e-12));
  CHECK(t.d1 == 0.0);

  // residual 0.3 at that precision; frozen from direct arithmetic
  t = gaussian_loglik(0.0, 0.3, tau);
  double expected = 0.5 * std::log(tau / (2.0 * M_PI)) - 0.5;
  CHECK(t.value == doctest::Approx(expected).epsilon(1e-14));
  CHECK(expected == doctest::Approx(-0.21497).epsilon(1e-4));

  t = gaussian_loglik(1.0, 2.0, 4.0);
  CHECK(t.d1 == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(t.d2 == doctest::Approx(-4.0).epsilon(1e-12));
}

TEST_CASE("poisson survival kernel values") {
  LogLikTriple t = poisson_surv_loglik(std::log(0.2), 0.0, 0.0);
  CHECK(t.value == doctest::Approx(-0.2).epsilon(1e-12));

  t = poisson_surv_loglik(0.0, 1.0, 0.0);
  CHECK(t.d1 == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("segment sum equals closed-form exponential log-likelihood") {
  // constant hazard 0.2, T = 4, delta = 1: closed form log 0.2 - 0.8
  const double closed = std::log(0.2) - 0.8;
  for (int m : {2, 5, 15, 37}) {
    double width = 4.0 / m;
    KahanSum total;
    for (int k = 0; k < m; ++k) {
      double event = (k == m - 1) ? 1.0 : 0.0;
      total.add(poisson_surv_loglik(std::log(0.2), event, std::log(width)).value);
    }
    CHECK(total.value() == doctest::Approx(closed).epsilon(1e-12));
  }
}

TEST_CASE("kernel derivatives match central differences at 100 random points") {
  std::mt19937_64 eng(7);
  std::uniform_real_distribution<double> eta_d(-8.0, 8.0);
  std::uniform_real_distribution<double> pos(0.05, 5.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  // near-optimal central-difference steps for first and second derivatives
  const double h1 = 1e-6, h2 = 6e-4;

  auto check_kernel = [&](const std::function<double(double)>& f,
                          const LogLikTriple& t, double x) {
    double d1 = oracle::central_diff(f, x, h1).d1;
    double d2 = oracle::central_diff(f, x, h2).d2;
    CHECK(t.d1 == doctest::Approx(d1).epsilon(1e-6));
    CHECK(t.d2 == doctest::Approx(d2).epsilon(1e-6));
    CHECK(t.d2 <= 0.0);
  };

  for (int i = 0; i < 100; ++i) {
    double eta = eta_d(eng);
    double u = unif(eng) < 0.5 ? 0.0 : 1.0;
    check_kernel([&](double e) { return binary_loglik(e, u).value; },
                 binary_loglik(eta, u), eta);

    double tau = pos(eng);
    double y = eta_d(eng);
    check_kernel([&](double e) { return gaussian_loglik(e, y, tau).value; },
                 gaussian_loglik(eta, y, tau), eta);

    double ev = unif(eng) < 0.5 ? 0.0 : 1.0;
    double off = std::log(pos(eng));
    double eta_s = eta / 2.0;
    check_kernel([&](double e) { return poisson_surv_loglik(e, ev, off).value; },
                 poisson_surv_loglik(eta_s, ev, off), eta_s);
  }
}

namespace {
std::vector<SubjectData> toy_subject() {
  SubjectData s;
  s.id = 1;
  s.surv_time = 2.5;
  s.event = 1;
  s.visits = {{0.0, 3.2}, {0.5, 0.0}, {1.0, 1.4}};
  s.covariates["trt"] = 1.0;
  return {s};
}

TpjmSpec toy_spec() {
  TpjmSpec spec;
  spec.binary_terms = {parse_term("1"), parse_term("time"), parse_term("trt"),
                       parse_term("time:trt")};
  spec.continuous_terms = spec.binary_terms;
  spec.survival_terms = {parse_term("trt")};
  spec.re_structure = ReStructure::intercepts_only;
  spec.baseline_bins = 5;
  spec.follow_up_max = 4.0;
  spec.rw_order = 1;
  return spec;
}
}  // namespace

TEST_CASE("augment_dataset: hand-computed segmentation") {
  auto data = toy_subject();
  auto spec = toy_spec();
  auto layout = make_layout(spec, 1);
  auto rows = augment_dataset(data, spec, layout);

  int n_bin = 0, n_cont = 0, n_surv = 0;
  double exposure_sum = 0.0;
  std::vector<double> exposures;
  for (const auto& r : rows) {
    if (r.kind == ObsKind::binary) ++n_bin;
    if (r.kind == ObsKind::continuous) ++n_cont;
    if (r.kind == ObsKind::surv_segment) {
      ++n_surv;
      exposures.push_back(std::exp(r.offset));
      exposure_sum += std::exp(r.offset);
    }
  }
  CHECK(n_bin == 3);
  CHECK(n_cont == 2);
  CHECK(n_surv == 4);
  REQUIRE(exposures.size() == 4);
  CHECK(exposures[0] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(exposures[1] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(exposures[2] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(exposures[3] == doctest::Approx(0.1).epsilon(1e-10));
  CHECK(exposure_sum == doctest::Approx(2.5).epsilon(1e-12));

  // event attaches to the last emitted segment
  double event_sum = 0.0;
  for (const auto& r : rows)
    if (r.kind == ObsKind::surv_segment) event_sum += r.response;
  CHECK(event_sum == 1.0);
}

TEST_CASE("augment_dataset: T exactly on a bin boundary") {
  auto data = toy_subject();
  data[0].surv_time = 1.6;  // boundary of bin 2 with width 0.8
  data[0].visits = {{0.0, 3.2}, {0.5, 0.0}, {1.0, 1.4}};
  auto spec = toy_spec();
  auto layout = make_layout(spec, 1);
  auto rows = augment_dataset(data, spec, layout);
  int n_surv = 0;
  double exposure_sum = 0.0;
  for (const auto& r : rows)
    if (r.kind == ObsKind::surv_segment) {
      ++n_surv;
      exposure_sum += std::exp(r.offset);
    }
  CHECK(n_surv == 2);  // zero-exposure third segment excluded
  CHECK(exposure_sum == doctest::Approx(1.6).epsilon(1e-12));
}

TEST_CASE("augment_dataset: all-positive visits") {
  auto data = toy_subject();
  data[0].visits = {{0.0, 3.2}, {0.5, 2.0}, {1.0, 1.4}};
  auto spec = toy_spec();
  auto layout = make_layout(spec, 1);
  auto rows = augment_dataset(data, spec, layout);
  int n_bin = 0, n_cont = 0;
  for (const auto& r : rows) {
    if (r.kind == ObsKind::binary) {
      ++n_bin;
      CHECK(r.response == 1.0);
    }
    if (r.kind == ObsKind::continuous) ++n_cont;
  }
  CHECK(n_bin == 3);
  CHECK(n_cont == 3);
}

TEST_CASE("augment_dataset rejects T beyond the horizon") {
  auto data = toy_subject();
  data[0].surv_time = 4.5;
  auto spec = toy_spec();
  auto layout = make_layout(spec, 1);
  CHECK_THROWS_AS(augment_dataset(data, spec, layout), std::invalid_argument);
}
