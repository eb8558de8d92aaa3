#pragma once

#include <functional>
#include <map>
#include <vector>

#include <Eigen/Core>

namespace hardchain {

struct KernelParams {
  int T = 1;      ///< chain length
  int p_max = 2;  ///< highest derivative order served
};

/// Symmetric T x T tridiagonal matrix stored by diagonals.
struct Tridiagonal {
  Eigen::VectorXd diag;  // size T
  Eigen::VectorXd off;   // size T-1, entry (i, i+1)

  Eigen::MatrixXd dense() const;
  Eigen::VectorXd multiply(const Eigen::VectorXd& v) const;
};

/// Order-k symmetric tensor keyed by sorted (0-based) index tuples. Only the
/// canonical (sorted) representative of each permutation class is stored.
struct SparseSymTensor {
  int order = 0;
  std::map<std::vector<int>, double> entries;

  double at(std::vector<int> idx) const;
  /// Frobenius norm of the fully materialized tensor (each stored entry counted
  /// with its permutation multiplicity).
  double flattened_norm() const;
  /// Largest index carrying a nonzero entry, 1-based; 0 when all entries vanish.
  int support_end() const;
};

/// Value and derivatives of the chain function in chain coordinates.
struct KernelDerivs {
  int order = 0;
  double value = 0.0;
  Eigen::VectorXd grad;                 // order >= 1
  Tridiagonal hess;                     // order >= 2
  std::vector<SparseSymTensor> higher;  // orders 3..order

  bool operator==(const KernelDerivs& o) const;
};

/// Test-only perturbations added to the elementary functions; used to check
/// that certifications are sensitive to the formulas they target.
struct KernelHooks {
  std::function<double(double x, int k)> psi_perturbation;
  std::function<double(double x, int k)> phi_perturbation;
};

/// Psi^(k)(x) without an order ceiling. Exactly zero for x <= 1/2.
double psi_unbounded(double x, int k);
/// Phi^(k)(x) without an order ceiling.
double phi_unbounded(double x, int k);

/// The chain function
///   f(x) = -Psi(1) Phi(x_1) + sum_{i=2..T} [Psi(-x_{i-1}) Phi(-x_i) - Psi(x_{i-1}) Phi(x_i)]
/// and its derivatives. Every derivative tensor has bandwidth 1: only
/// neighbouring coordinates couple.
class ChainKernel {
 public:
  explicit ChainKernel(KernelParams params, KernelHooks hooks = {});

  const KernelParams& params() const { return params_; }
  int T() const { return params_.T; }

  double psi(double x, int k) const;
  double phi(double x, int k) const;

  KernelDerivs derivs(const Eigen::VectorXd& x, int p) const;
  double value(const Eigen::VectorXd& x) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;

 private:
  void check_order(int k) const;
  void fill_tables(double x, int p, std::vector<double>& psi_pos, std::vector<double>& psi_neg,
                   std::vector<double>& phi_pos, std::vector<double>& phi_neg) const;

  KernelParams params_;
  KernelHooks hooks_;
};

/// max{ i >= 0 : |x_i| >= zeta } with x_0 = 0 (1-based result). For zeta == 0
/// the comparison is strict, i.e. the result is the last nonzero index.
int prog(const Eigen::VectorXd& x, double zeta);

}  // namespace hardchain
