#include "hardchain/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hardchain/errors.hpp"
#include "hardchain/taylor.hpp"

namespace hardchain {

namespace {

constexpr double kSqrtE = 1.6487212707001282;      // sqrt(e)
constexpr double kSqrtHalfPi = 1.2533141373155003;  // sqrt(pi/2)
constexpr double kFlatGuard = 0.5 + 1e-12;

// Psi and all its derivatives up to p at x, via a Taylor jet of exp(1 - 1/(2x-1)^2).
void psi_jet(double x, int p, std::vector<double>& out) {
  out.assign(static_cast<std::size_t>(p) + 1, 0.0);
  if (x <= kFlatGuard) return;
  const double u = 2.0 * x - 1.0;
  if (p <= 2) {
    const double v = std::exp(1.0 - 1.0 / (u * u));
    out[0] = v;
    if (p >= 1) out[1] = v * 4.0 / (u * u * u);
    if (p >= 2) {
      const double u2 = u * u;
      out[2] = v * (16.0 / (u2 * u2 * u2) - 24.0 / (u2 * u2));
    }
    return;
  }
  const Jet uj = Jet::variable(p, x) * 2.0 + (-1.0);
  const Jet w = reciprocal(uj);
  const Jet e = exp(1.0 - w * w);
  for (int k = 0; k <= p; ++k) out[static_cast<std::size_t>(k)] = e.derivative(k);
  // closed forms are exact to rounding for the low orders
  const double v = std::exp(1.0 - 1.0 / (u * u));
  out[0] = v;
  out[1] = v * 4.0 / (u * u * u);
  const double u2 = u * u;
  out[2] = v * (16.0 / (u2 * u2 * u2) - 24.0 / (u2 * u2));
}

// Probabilists' Hermite polynomial He_n(x).
double hermite_he(int n, double x) {
  if (n == 0) return 1.0;
  double prev = 1.0, cur = x;
  for (int k = 1; k < n; ++k) {
    const double next = x * cur - static_cast<double>(k) * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

}  // namespace

double psi_unbounded(double x, int k) {
  if (k < 0) throw UnsupportedOrder("negative derivative order");
  std::vector<double> out;
  psi_jet(x, k, out);
  return out[static_cast<std::size_t>(k)];
}

double phi_unbounded(double x, int k) {
  if (k < 0) throw UnsupportedOrder("negative derivative order");
  if (k == 0) return kSqrtE * kSqrtHalfPi * std::erfc(-x / std::sqrt(2.0));
  // Phi^(k)(x) = sqrt(e) (d/dx)^{k-1} e^{-x^2/2} = sqrt(e) (-1)^{k-1} He_{k-1}(x) e^{-x^2/2}
  const double sign = ((k - 1) % 2 == 0) ? 1.0 : -1.0;
  return kSqrtE * sign * hermite_he(k - 1, x) * std::exp(-0.5 * x * x);
}

Eigen::MatrixXd Tridiagonal::dense() const {
  const auto n = diag.size();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) m(i, i) = diag(i);
  for (Eigen::Index i = 0; i + 1 < n; ++i) m(i, i + 1) = m(i + 1, i) = off(i);
  return m;
}

Eigen::VectorXd Tridiagonal::multiply(const Eigen::VectorXd& v) const {
  const auto n = diag.size();
  Eigen::VectorXd r = diag.cwiseProduct(v);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    r(i) += off(i) * v(i + 1);
    r(i + 1) += off(i) * v(i);
  }
  return r;
}

double SparseSymTensor::at(std::vector<int> idx) const {
  std::sort(idx.begin(), idx.end());
  const auto it = entries.find(idx);
  return it == entries.end() ? 0.0 : it->second;
}

double SparseSymTensor::flattened_norm() const {
  double sum = 0.0;
  for (const auto& [key, v] : entries) {
    // multinomial multiplicity k! / prod(run lengths!)
    double mult = 1.0;
    for (int i = 2; i <= order; ++i) mult *= i;
    std::size_t run = 1;
    for (std::size_t i = 1; i <= key.size(); ++i) {
      if (i < key.size() && key[i] == key[i - 1]) {
        ++run;
      } else {
        for (std::size_t r = 2; r <= run; ++r) mult /= static_cast<double>(r);
        run = 1;
      }
    }
    sum += mult * v * v;
  }
  return std::sqrt(sum);
}

int SparseSymTensor::support_end() const {
  int last = 0;
  for (const auto& [key, v] : entries)
    if (v != 0.0) last = std::max(last, key.back() + 1);
  return last;
}

bool KernelDerivs::operator==(const KernelDerivs& o) const {
  if (order != o.order || value != o.value) return false;
  if (order >= 1 && grad != o.grad) return false;
  if (order >= 2 && (hess.diag != o.hess.diag || hess.off != o.hess.off)) return false;
  if (higher.size() != o.higher.size()) return false;
  for (std::size_t i = 0; i < higher.size(); ++i)
    if (higher[i].entries != o.higher[i].entries) return false;
  return true;
}

ChainKernel::ChainKernel(KernelParams params, KernelHooks hooks)
    : params_(params), hooks_(std::move(hooks)) {
  if (params_.T < 1) throw std::invalid_argument("chain length T must be >= 1");
  if (params_.p_max < 0) throw std::invalid_argument("p_max must be >= 0");
}

void ChainKernel::check_order(int k) const {
  if (k < 0 || k > params_.p_max)
    throw UnsupportedOrder("unsupported order " + std::to_string(k) + " (p_max = " +
                           std::to_string(params_.p_max) + ")");
}

double ChainKernel::psi(double x, int k) const {
  check_order(k);
  double v = psi_unbounded(x, k);
  if (hooks_.psi_perturbation) v += hooks_.psi_perturbation(x, k);
  return v;
}

double ChainKernel::phi(double x, int k) const {
  check_order(k);
  double v = phi_unbounded(x, k);
  if (hooks_.phi_perturbation) v += hooks_.phi_perturbation(x, k);
  return v;
}

void ChainKernel::fill_tables(double x, int p, std::vector<double>& psi_pos,
                              std::vector<double>& psi_neg, std::vector<double>& phi_pos,
                              std::vector<double>& phi_neg) const {
  psi_jet(x, p, psi_pos);
  psi_jet(-x, p, psi_neg);
  phi_pos.resize(static_cast<std::size_t>(p) + 1);
  phi_neg.resize(static_cast<std::size_t>(p) + 1);
  for (int k = 0; k <= p; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    phi_pos[ku] = phi_unbounded(x, k);
    phi_neg[ku] = phi_unbounded(-x, k);
    if (hooks_.psi_perturbation) {
      psi_pos[ku] += hooks_.psi_perturbation(x, k);
      psi_neg[ku] += hooks_.psi_perturbation(-x, k);
    }
    if (hooks_.phi_perturbation) {
      phi_pos[ku] += hooks_.phi_perturbation(x, k);
      phi_neg[ku] += hooks_.phi_perturbation(-x, k);
    }
  }
}

KernelDerivs ChainKernel::derivs(const Eigen::VectorXd& x, int p) const {
  check_order(p);
  const int T = params_.T;
  if (x.size() != T)
    throw DimensionMismatch("chain point has length " + std::to_string(x.size()) +
                            ", expected " + std::to_string(T));

  // tables[j][m]: Psi^(m)(x_j), Psi^(m)(-x_j), Phi^(m)(x_j), Phi^(m)(-x_j)
  std::vector<std::vector<double>> ps(T), psn(T), ph(T), phn(T);
  for (int j = 0; j < T; ++j) fill_tables(x(j), p, ps[j], psn[j], ph[j], phn[j]);
  const double psi_one = psi(1.0, 0);

  // mixed partial d^m/dx_a^m d^{k-m}/dx_b^{k-m} of the term coupling (a, b = a+1)
  auto pair_term = [&](int a, int k, int m) {
    const int b = a + 1;
    const double sign = (k % 2 == 0) ? 1.0 : -1.0;
    const auto mu = static_cast<std::size_t>(m), nu = static_cast<std::size_t>(k - m);
    return sign * psn[a][mu] * phn[b][nu] - ps[a][mu] * ph[b][nu];
  };

  KernelDerivs out;
  out.order = p;

  double value = -psi_one * ph[0][0];
  for (int a = 0; a + 1 < T; ++a) value += pair_term(a, 0, 0);
  out.value = value;

  if (p >= 1) {
    out.grad.resize(T);
    for (int j = 0; j < T; ++j) {
      double g = (j == 0) ? -psi_one * ph[0][1] : pair_term(j - 1, 1, 0);
      if (j + 1 < T) g += pair_term(j, 1, 1);
      out.grad(j) = g;
    }
  }

  if (p >= 2) {
    out.hess.diag.resize(T);
    out.hess.off.resize(T - 1);
    for (int j = 0; j < T; ++j) {
      double h = (j == 0) ? -psi_one * ph[0][2] : pair_term(j - 1, 2, 0);
      if (j + 1 < T) h += pair_term(j, 2, 2);
      out.hess.diag(j) = h;
    }
    for (int a = 0; a + 1 < T; ++a) out.hess.off(a) = pair_term(a, 2, 1);
  }

  for (int k = 3; k <= p; ++k) {
    SparseSymTensor t;
    t.order = k;
    for (int j = 0; j < T; ++j) {
      double v = (j == 0) ? -psi_one * ph[0][static_cast<std::size_t>(k)] : pair_term(j - 1, k, 0);
      if (j + 1 < T) v += pair_term(j, k, k);
      t.entries.emplace(std::vector<int>(static_cast<std::size_t>(k), j), v);
    }
    for (int a = 0; a + 1 < T; ++a) {
      for (int m = 1; m < k; ++m) {
        std::vector<int> key(static_cast<std::size_t>(m), a);
        key.insert(key.end(), static_cast<std::size_t>(k - m), a + 1);
        t.entries.emplace(std::move(key), pair_term(a, k, m));
      }
    }
    out.higher.push_back(std::move(t));
  }
  return out;
}

double ChainKernel::value(const Eigen::VectorXd& x) const { return derivs(x, 0).value; }

Eigen::VectorXd ChainKernel::gradient(const Eigen::VectorXd& x) const {
  return derivs(x, 1).grad;
}

int prog(const Eigen::VectorXd& x, double zeta) {
  if (zeta < 0.0) throw std::invalid_argument("prog threshold must be >= 0");
  for (Eigen::Index i = x.size(); i >= 1; --i) {
    const double a = std::abs(x(i - 1));
    if (zeta == 0.0 ? a > 0.0 : a >= zeta) return static_cast<int>(i);
  }
  return 0;
}

}  // namespace hardchain
