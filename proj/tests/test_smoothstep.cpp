#include <doctest.h>

#include <cmath>
#include <random>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "hardchain/kernel.hpp"
#include "hardchain/smoothstep.hpp"

using namespace hardchain;
using Eigen::VectorXd;

TEST_CASE("normalization is stable under refinement") {
  const SmoothStep coarse(256), fine(512);
  CHECK(std::abs(coarse.norm_const() - fine.norm_const()) <= 1e-12 * fine.norm_const());
  boost::math::quadrature::tanh_sinh<double> ts;
  const double ref = ts.integrate(SmoothStep::bump, 0.25, 0.5);
  CHECK(coarse.norm_const() == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("step shape") {
  const auto& s = SmoothStep::shared();
  CHECK(s(0.2) == 0.0);
  CHECK(s(0.25) == 0.0);
  CHECK(s(0.6) == 1.0);
  CHECK(s(0.5) == 1.0);
  CHECK(s(0.375) == doctest::Approx(0.5).epsilon(1e-12));  // bump is symmetric about 3/8
  double prev = 0.0, max_slope = 0.0;
  for (int i = 0; i <= 4000; ++i) {
    const double x = 0.2 + 0.35 * i / 4000.0;
    const double v = s(x);
    CHECK(v >= prev - 1e-15);
    prev = v;
    max_slope = std::max(max_slope, s(x, 1));
  }
  CHECK(max_slope <= 6.0);
  const double h = 1e-6;
  for (double x : {0.3, 0.33, 0.41, 0.47}) {
    CHECK(s(x, 1) == doctest::Approx((s(x + h) - s(x - h)) / (2 * h)).epsilon(1e-6));
    CHECK(s(x, 2) == doctest::Approx((s(x + h, 1) - s(x - h, 1)) / (2 * h)).epsilon(1e-5));
  }
}

TEST_CASE("theta") {
  const double beta = 2.0;
  CHECK(theta(2, VectorXd{{5.0, 0.4, -0.5, 0.1}}, beta) == 1.0);
  CHECK(theta(2, VectorXd{{0.0, 0.0, 1.0, 0.0}}, beta) == 0.0);
  std::mt19937_64 g(4);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  const int T = 6;
  double worst = 0.0;
  for (int s = 0; s < 5000; ++s) {
    VectorXd x(T), y(T);
    for (int k = 0; k < T; ++k) x(k) = u(g) * beta;
    for (int k = 0; k < T; ++k) y(k) = x(k) + 1e-3 * u(g);
    for (int i = 1; i <= T; ++i) {
      const double th = theta(i, x, beta);
      CHECK(th >= (i > prog(x, beta / 4) ? 1.0 : 0.0));
      CHECK(th <= (i > prog(x, beta / 2) ? 1.0 : 0.0));
      worst = std::max(worst, std::abs(th - theta(i, y, beta)) / (x - y).norm());
    }
  }
  CHECK(worst <= 36.0 / beta);
}
