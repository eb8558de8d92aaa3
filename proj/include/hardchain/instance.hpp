#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hardchain/kernel.hpp"

namespace hardchain {

/// Constants the parameter formulas are built from.
namespace constants {
inline constexpr double kGradientBound = 23.0;         // sup-norm bound on the chain gradient
inline constexpr double kGradientLipschitz = 152.0;    // gradient Lipschitz constant of the chain
inline constexpr double kMssLipschitz = 328.0;         // mean-squared smoothness factor
inline constexpr double kSoftProjectionScale = 230.0;  // R_hat = 230 beta sqrt(T)
inline constexpr double kValueGapPerLink = 12.0;       // f(0) - inf f <= 12 T
inline constexpr double kDeterministicC0 = 1.0 / 12.0; // T = c0 * Delta / alpha
}  // namespace constants

enum class Setting { Deterministic, Stochastic, StochasticMSS };

std::string to_string(Setting s);
Setting setting_from_string(const std::string& s);

/// Problem constants; `lipschitz` is L_p (deterministic) or L (stochastic), and
/// `lbar` the mean-squared smoothness constant (mss only).
struct ProblemConstants {
  int p = 1;
  double delta = 1.0;
  double lipschitz = 1.0;
  double lbar = 1.0;
  double sigma = 1.0;
  double eps = 0.1;
  std::optional<double> ell;  // kernel Lipschitz constant; defaults to 152 for p = 1
};

struct InstanceParams {
  Setting setting = Setting::Deterministic;
  int p = 1;
  int T = 1;
  int columns = 0;  ///< stochastic column count (T for Stochastic, script-T for mss)
  long d = 1;
  long d_floor = 1;
  double alpha = 1.0;
  double beta = 1.0;
  double eps = 0.1;
  double ell = constants::kGradientLipschitz;
  double lipschitz = 1.0;  ///< L_p, L, or derived L (mss)
  double delta = 1.0;
  double lbar = 0.0;
  double sigma = 0.0;
  double R = 0.0;
  double R_hat = 0.0;
  double T_raw = 1.0;
  double columns_raw = 0.0;
  std::vector<std::string> notes;  ///< rounding and clamping records

  double alpha_over_beta() const { return alpha / beta; }
};

/// Fill alpha, beta, T, script-T, R, R_hat and the dimension floor for a setting.
InstanceParams params_for(Setting setting, const ProblemConstants& c);

/// Feasibility ceiling on eps for the mss setting: 6 sigma^2 l_hat / (4 gamma^3 Delta Lbar).
double mss_eps_ceiling(const ProblemConstants& c);

/// The theorem's lower-bound expression evaluated with a caller-supplied c0.
double lower_bound_value(Setting setting, const ProblemConstants& c, double c0);

/// Column-orthonormal d x T matrix plus (optionally) T mutually orthogonal
/// blocks of ambient directions, each orthogonal to span(U).
struct RotationEmbedding {
  long d = 0;
  int T = 0;
  std::uint64_t seed = 0;
  Eigen::MatrixXd U;       // d x T
  int block_dim = 0;       // 0 when no block map
  Eigen::MatrixXd blocks;  // d x (T * block_dim); block i occupies columns [i*block_dim, (i+1)*block_dim)

  Eigen::Ref<const Eigen::MatrixXd> block(int i) const;  // 1-based chain index
};

/// Haar-distributed d x T column-orthonormal matrix: Gaussian matrix, thin QR,
/// columns sign-fixed so that R has a positive diagonal.
RotationEmbedding sample_haar(long d, int T, std::uint64_t seed);

/// Attach T orthogonal blocks of `block_dim` directions orthogonal to span(U).
void attach_blocks(RotationEmbedding& emb, int block_dim);

/// Derivatives of alpha * f(U^T x / beta). Orders >= 2 stay factored as
/// (alpha / beta^k, chain tensor, U).
struct AmbientDerivs {
  int order = 0;
  double value = 0.0;
  Eigen::VectorXd grad;       // ambient, order >= 1
  Eigen::VectorXd chain_point;
  KernelDerivs chain;         // derivatives in chain coordinates
  double alpha = 1.0;
  double beta = 1.0;
  std::shared_ptr<const RotationEmbedding> embedding;

  double scale(int k) const;
  Eigen::MatrixXd hessian_dense() const;
};

struct InstanceOptions {
  std::optional<long> d;            ///< explicit ambient dimension
  bool allow_below_floor = false;   ///< test override; taints the instance
  int p_max = 2;
};

class Instance {
 public:
  /// Build from parameters: samples U from `seed` and, for stochastic settings,
  /// the hidden-subspace block map.
  static Instance create(const InstanceParams& params, std::uint64_t seed,
                         const InstanceOptions& opts = {});

  /// The bare chain function (alpha = beta = 1, U = I, d = T).
  static Instance kernel_units(int T, int p_max = 2, int columns = 0);

  Instance(InstanceParams params, std::shared_ptr<const RotationEmbedding> emb,
           std::vector<std::string> taint, int p_max, bool identity);

  const InstanceParams& params() const { return params_; }
  const RotationEmbedding& embedding() const { return *embedding_; }
  std::shared_ptr<const RotationEmbedding> embedding_ptr() const { return embedding_; }
  const ChainKernel& kernel() const { return kernel_; }
  const std::vector<std::string>& taint() const { return taint_; }
  bool identity_embedding() const { return identity_; }
  long d() const { return embedding_->d; }
  int T() const { return params_.T; }
  std::uint64_t seed() const { return embedding_->seed; }

  /// U^T x / beta.
  Eigen::VectorXd chain_coords(const Eigen::VectorXd& x) const;
  /// beta * U y.
  Eigen::VectorXd ambient_from_chain(const Eigen::VectorXd& y) const;

  AmbientDerivs tilde_eval(const Eigen::VectorXd& x, int p) const;
  Eigen::VectorXd tilde_gradient(const Eigen::VectorXd& x) const;

  Eigen::VectorXd chi(const Eigen::VectorXd& x) const;
  Eigen::VectorXd chi_jvp(const Eigen::VectorXd& x, const Eigen::VectorXd& v) const;

  struct HatValue {
    double value;
    Eigen::VectorXd grad;
  };
  HatValue hat_eval(const Eigen::VectorXd& x) const;

  /// Replace the kernel (test hooks).
  void set_kernel_hooks(KernelHooks hooks);

 private:
  void check_ambient(const Eigen::VectorXd& x) const;

  InstanceParams params_;
  std::shared_ptr<const RotationEmbedding> embedding_;
  std::vector<std::string> taint_;
  ChainKernel kernel_;
  bool identity_;
};

/// JSON header next to a raw little-endian float64 column-major U payload.
struct SavedInstance {
  std::string header_path;
  std::string payload_path;
  std::uint64_t payload_hash;
};

SavedInstance save_instance(const Instance& inst, const std::string& prefix);
Instance load_instance(const std::string& header_path);

/// FNV-1a over raw bytes.
std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t hash_vector(const Eigen::VectorXd& v);

inline constexpr int kInstanceFormatVersion = 1;

}  // namespace hardchain
