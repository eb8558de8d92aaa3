#include <doctest.h>

#include <chrono>
#include <cmath>

#include "hardchain/verify.hpp"

using namespace hardchain;
using Eigen::VectorXd;

TEST_CASE("wilson interval") {
  const auto a = wilson(0, 10000);
  CHECK(a.lo == 0.0);
  const double z2 = kZ99 * kZ99;
  CHECK(a.hi == doctest::Approx(z2 / (10000 + z2)).epsilon(1e-12));
  // hits = 50, n = 100: symmetric around 1/2
  const auto b = wilson(50, 100);
  CHECK(b.lo + b.hi == doctest::Approx(1.0).epsilon(1e-14));
  // reference computed by hand: p = 0.3, n = 200
  const double p = 0.3, n = 200, den = 1 + z2 / n;
  const double c = (p + z2 / (2 * n)) / den;
  const double h = kZ99 * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / den;
  const auto w = wilson(60, 200);
  CHECK(w.lo == doctest::Approx(c - h));
  CHECK(w.hi == doctest::Approx(c + h));
  CHECK(compare_upper({0.0, 0.1}, 0.2) == Outcome::Pass);
  CHECK(compare_upper({0.3, 0.4}, 0.2) == Outcome::Fail);
  CHECK(compare_upper({0.1, 0.4}, 0.2) == Outcome::Inconclusive);
}

TEST_CASE("least squares") {
  std::vector<double> x, y;
  for (double e : {0.4, 0.2, 0.1, 0.05}) {
    x.push_back(std::log(e));
    y.push_back(std::log(3.0 * std::pow(e, -2.0)));
  }
  const auto f = least_squares(x, y);
  CHECK(f.slope == doctest::Approx(-2.0).epsilon(1e-9));
  CHECK(f.r2 == doctest::Approx(1.0));
  const auto flat = least_squares({1, 2, 3}, {5, 5, 5});
  CHECK(flat.slope == 0.0);
  CHECK(!flat.r2_defined);
  CHECK(std::isnan(flat.r2));
  CHECK_THROWS(least_squares({1, 1, 1}, {1, 2, 3}));
}

TEST_CASE("kernel suite on T = 10 passes") {
  KernelSuiteSpec s;
  s.Ts = {10};
  s.samples = 2000;
  s.fd_points = 20;
  s.reference_points = 20;
  const auto r = certify_kernel(s);
  for (const auto& c : r.checks) CHECK_MESSAGE(c.outcome == Outcome::Pass, c.id);
  CHECK(r.to_json().dump() == certify_kernel(s).to_json().dump());
  s.workers = 4;
  CHECK(r.to_json().dump() == certify_kernel(s).to_json().dump());
}

TEST_CASE("adversarial point skips the gradient floor") {
  KernelSuiteSpec s;
  s.Ts = {5};
  s.points = {VectorXd::Ones(5)};
  s.fd_points = 2;
  s.reference_points = 2;
  const auto r = certify_kernel(s);
  CHECK(r.find("kernel.T5.gradient_floor").outcome == Outcome::Skipped);
  CHECK(!r.failed());
}

TEST_CASE("mutations are caught") {
  KernelSuiteSpec s;
  s.Ts = {6};
  s.samples = 500;
  s.fd_points = 10;
  s.reference_points = 20;
  SUBCASE("psi shifted on x > 1/2") {
    s.hooks.psi_perturbation = [](double x, int k) { return (k == 0 && x > 0.5) ? 1e-3 : 0.0; };
    const auto r = certify_kernel(s);
    CHECK(r.failed());
    CHECK(r.find("kernel.T6.reference_value").outcome == Outcome::Fail);
    // a constant shift has no derivative, so truncation and differences stay green
    CHECK(r.find("kernel.T6.truncation").outcome == Outcome::Pass);
  }
  SUBCASE("psi nonzero inside the flat region") {
    s.hooks.psi_perturbation = [](double x, int k) { return (k == 0 && x <= 0.5 && x > 0.1) ? 1e-3 : 0.0; };
    const auto r = certify_kernel(s);
    CHECK(r.find("kernel.T6.truncation").outcome == Outcome::Fail);
  }
  SUBCASE("phi derivative off by 1e-3") {
    s.hooks.phi_perturbation = [](double, int k) { return k == 1 ? 1e-3 : 0.0; };
    const auto r = certify_kernel(s);
    CHECK(r.find("kernel.T6.finite_difference").outcome == Outcome::Fail);
  }
}

TEST_CASE("lipschitz estimates") {
  const auto a = estimate_lipschitz(1, 10, 500);
  CHECK(a.estimate >= 1.0);
  CHECK(a.estimate <= 152.0);
  CHECK(estimate_lipschitz(1, 10, 1000).estimate >= a.estimate);
  const auto b = estimate_lipschitz(2, 10, 500);
  CHECK(b.norm == "operator");
  CHECK(b.estimate <= 32.0 * a.estimate * a.estimate);
  CHECK(estimate_lipschitz(3, 4, 50).norm == "flattened-frobenius");
}

TEST_CASE("stochastic certification") {
  const auto params = stochastic_test_params(6, 8);
  CHECK(params.T == 6);
  InstanceOptions o;
  o.d = 6 + 6 * 16;
  const auto inst = Instance::create(params, 3, o);
  StochasticSpec s;
  s.points = 16;
  s.bernoulli_queries = 20000;
  s.mss_pairs = 100;
  for (auto kind : {OracleKind::MeanHiding, OracleKind::Mss, OracleKind::Bernoulli}) {
    const auto r = certify_stochastic(inst, kind, s);
    for (const auto& c : r.checks) CHECK_MESSAGE(c.outcome == Outcome::Pass, c.id, " ", c.statistic, " ", c.bound);
  }
  s.bernoulli_prob = 1.0;
  const auto r = certify_stochastic(inst, OracleKind::Bernoulli, s);
  CHECK(r.find("bernoulli.exact_variance").statistic == 0.0);
}

TEST_CASE("concentration") {
  ConcentrationSpec s;
  s.sphere_dims = {64};
  s.sphere_c = {0.0, 0.4};
  s.sphere_trials = 20000;
  s.T = 1;
  s.trials = 1000;
  auto r = certify_concentration(s);
  CHECK(r.find("sphere.d64.c0").outcome == Outcome::Pass);
  CHECK(r.find("sphere.d64.c0").detail["hits"] == 20000);
  CHECK(r.find("zero_chain.floor200").detail["per_t"][0]["hits"] == 0);
  s.T = 4;
  s.d = 50;
  r = certify_concentration(s);
  CHECK(r.find("zero_chain.floor200").outcome == Outcome::Skipped);
  CHECK_THROWS(certify_concentration([] {
    ConcentrationSpec t;
    t.trials = 10;
    return t;
  }()));
}

TEST_CASE("junit output") {
  KernelSuiteSpec s;
  s.Ts = {3};
  s.samples = 50;
  s.fd_points = 2;
  s.reference_points = 2;
  const auto xml = certify_kernel(s).to_junit();
  CHECK(xml.find("<testsuite name=\"hardchain.kernel\" tests=\"7\" failures=\"0\"") != std::string::npos);
}
