#include "hardchain/smoothstep.hpp"

#include <cmath>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace hardchain {

namespace {

constexpr double kLo = 0.25;
constexpr double kHi = 0.5;

double panel_integral(double a, double b) {
  using boost::math::quadrature::gauss_kronrod;
  return gauss_kronrod<double, 15>::integrate(SmoothStep::bump, a, b, 0);
}

}  // namespace

double SmoothStep::bump(double t) {
  if (t <= kLo || t >= kHi) return 0.0;
  return std::exp(-1.0 / (100.0 * (t - kLo) * (kHi - t)));
}

double SmoothStep::bump_derivative(double t) {
  if (t <= kLo || t >= kHi) return 0.0;
  const double q = (t - kLo) * (kHi - t);
  const double dq = (kHi - t) - (t - kLo);
  return bump(t) * dq / (100.0 * q * q);
}

SmoothStep::SmoothStep(int panels)
    : panels_(panels), width_((kHi - kLo) / panels), norm_(0.0) {
  if (panels < 1) throw std::invalid_argument("SmoothStep needs at least one panel");
  cumulative_.resize(static_cast<std::size_t>(panels) + 1, 0.0);
  for (int k = 0; k < panels; ++k) {
    const double a = kLo + k * width_;
    const double b = (k + 1 == panels) ? kHi : a + width_;
    cumulative_[static_cast<std::size_t>(k) + 1] =
        cumulative_[static_cast<std::size_t>(k)] + panel_integral(a, b);
  }
  norm_ = cumulative_.back();
}

const SmoothStep& SmoothStep::shared() {
  static const SmoothStep instance;
  return instance;
}

double SmoothStep::operator()(double s, int k) const {
  switch (k) {
    case 0: {
      if (s <= kLo) return 0.0;
      if (s >= kHi) return 1.0;
      auto panel = static_cast<int>((s - kLo) / width_);
      if (panel >= panels_) panel = panels_ - 1;
      const double a = kLo + panel * width_;
      const double partial = (s > a) ? panel_integral(a, s) : 0.0;
      const double v = (cumulative_[static_cast<std::size_t>(panel)] + partial) / norm_;
      return v > 1.0 ? 1.0 : v;
    }
    case 1:
      return bump(s) / norm_;
    case 2:
      return bump_derivative(s) / norm_;
    default:
      throw std::invalid_argument("smooth step serves orders 0, 1, 2 only");
  }
}

double theta(int i, const Eigen::VectorXd& x, double beta, const SmoothStep& step) {
  if (beta <= 0.0) throw std::invalid_argument("theta needs beta > 0");
  if (i < 1) throw std::invalid_argument("theta index is 1-based");
  double sq = 0.0;
  for (Eigen::Index k = x.size() - 1; k >= i - 1; --k) {
    const double g = step(std::abs(x(k)) / beta);
    sq += g * g;
  }
  return step(1.0 - std::sqrt(sq));
}

Eigen::VectorXd theta_all(const Eigen::VectorXd& x, double beta, const SmoothStep& step) {
  if (beta <= 0.0) throw std::invalid_argument("theta needs beta > 0");
  const auto n = x.size();
  Eigen::VectorXd out(n);
  double sq = 0.0;
  for (Eigen::Index k = n - 1; k >= 0; --k) {
    const double g = step(std::abs(x(k)) / beta);
    sq += g * g;
    out(k) = step(1.0 - std::sqrt(sq));
  }
  return out;
}

}  // namespace hardchain
