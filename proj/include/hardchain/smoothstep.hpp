#pragma once

#include <vector>

#include <Eigen/Core>

namespace hardchain {

/// Dimensionless smooth step with knees at 1/4 and 1/2:
///   step(s) = int_{1/4}^{s} bump / int_{1/4}^{1/2} bump,
///   bump(t) = exp(-1 / (100 (t - 1/4)(1/2 - t))) on (1/4, 1/2), 0 elsewhere.
///
/// The cumulative integral is tabulated on equal panels with a 15-point
/// Gauss-Kronrod rule per panel; evaluation adds one partial panel.
class SmoothStep {
 public:
  static constexpr int kDefaultPanels = 256;

  explicit SmoothStep(int panels = kDefaultPanels);

  /// Process-wide instance, built on first use.
  static const SmoothStep& shared();

  /// k = 0: the step; k = 1, 2: its derivatives in s.
  double operator()(double s, int k = 0) const;

  double norm_const() const { return norm_; }
  int panels() const { return panels_; }

  static double bump(double t);
  static double bump_derivative(double t);

 private:
  int panels_;
  double width_;
  double norm_;
  std::vector<double> cumulative_;
};

/// Smoothed indicator of i > prog_{beta/4}(x):
///   Theta_i(x) = step(1 - || (step(|x_k| / beta))_{k >= i} ||).
/// `i` is 1-based; x is in chain coordinates.
double theta(int i, const Eigen::VectorXd& x, double beta,
             const SmoothStep& step = SmoothStep::shared());

/// (Theta_1(x), ..., Theta_T(x)) in one pass over suffix sums.
Eigen::VectorXd theta_all(const Eigen::VectorXd& x, double beta,
                          const SmoothStep& step = SmoothStep::shared());

}  // namespace hardchain
