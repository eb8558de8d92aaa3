#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace hardchain {

/// Truncated univariate Taylor series f(x0 + h) = sum_k c_k h^k, k <= order.
///
/// Forward-mode propagation of all derivatives up to `order` in one pass; this
/// is the univariate collapse of nested hyper-dual numbers (a k-fold nested
/// hyper-dual carries the same information as c_0..c_k). Derivatives are
/// recovered as f^(k)(x0) = k! * c_k.
class Jet {
 public:
  Jet(int order, double value) : c_(static_cast<std::size_t>(order) + 1, 0.0) { c_[0] = value; }

  static Jet variable(int order, double x0) {
    Jet j(order, x0);
    if (order >= 1) j.c_[1] = 1.0;
    return j;
  }

  int order() const { return static_cast<int>(c_.size()) - 1; }
  double coeff(int k) const { return c_[static_cast<std::size_t>(k)]; }

  double derivative(int k) const {
    double fact = 1.0;
    for (int i = 2; i <= k; ++i) fact *= i;
    return fact * coeff(k);
  }

  Jet& operator+=(const Jet& o) {
    check(o);
    for (std::size_t k = 0; k < c_.size(); ++k) c_[k] += o.c_[k];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    check(o);
    for (std::size_t k = 0; k < c_.size(); ++k) c_[k] -= o.c_[k];
    return *this;
  }
  Jet& operator*=(double s) {
    for (double& v : c_) v *= s;
    return *this;
  }
  Jet& operator+=(double s) {
    c_[0] += s;
    return *this;
  }

  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator*(Jet a, double s) { return a *= s; }
  friend Jet operator*(double s, Jet a) { return a *= s; }
  friend Jet operator+(Jet a, double s) { return a += s; }
  friend Jet operator+(double s, Jet a) { return a += s; }
  friend Jet operator-(double s, const Jet& a) {
    Jet r = a * -1.0;
    r.c_[0] += s;
    return r;
  }

  friend Jet operator*(const Jet& a, const Jet& b) {
    a.check(b);
    Jet r(a.order(), 0.0);
    const std::size_t n = a.c_.size();
    for (std::size_t k = 0; k < n; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i <= k; ++i) s += a.c_[i] * b.c_[k - i];
      r.c_[k] = s;
    }
    return r;
  }

  /// 1 / a, requires a.coeff(0) != 0.
  friend Jet reciprocal(const Jet& a) {
    if (a.c_[0] == 0.0) throw std::domain_error("Jet reciprocal of zero");
    Jet r(a.order(), 1.0 / a.c_[0]);
    const std::size_t n = a.c_.size();
    for (std::size_t k = 1; k < n; ++k) {
      double s = 0.0;
      for (std::size_t i = 1; i <= k; ++i) s += a.c_[i] * r.c_[k - i];
      r.c_[k] = -s / a.c_[0];
    }
    return r;
  }

  friend Jet exp(const Jet& a) {
    // r' = a' r  =>  k r_k = sum_{i=1..k} i a_i r_{k-i}
    Jet r(a.order(), std::exp(a.c_[0]));
    const std::size_t n = a.c_.size();
    for (std::size_t k = 1; k < n; ++k) {
      double s = 0.0;
      for (std::size_t i = 1; i <= k; ++i) s += static_cast<double>(i) * a.c_[i] * r.c_[k - i];
      r.c_[k] = s / static_cast<double>(k);
    }
    return r;
  }

 private:
  void check(const Jet& o) const {
    if (o.c_.size() != c_.size()) throw std::invalid_argument("Jet order mismatch");
  }

  std::vector<double> c_;
};

}  // namespace hardchain
