#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "hardchain/instance.hpp"
#include "hardchain/kernel.hpp"
#include "hardchain/oracles.hpp"
#include "hardchain/stats.hpp"

namespace hardchain {

struct CheckResult {
  std::string id;
  std::string property;
  Outcome outcome = Outcome::Pass;
  double statistic = 0.0;  // worst case over the samples
  double bound = 0.0;      // threshold the statistic is held against
  long samples = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> taint;
  nlohmann::ordered_json detail = nlohmann::ordered_json::object();
};

struct VerificationReport {
  std::string suite;
  std::vector<CheckResult> checks;

  int count(Outcome o) const;
  bool failed() const { return count(Outcome::Fail) > 0; }
  const CheckResult& find(const std::string& id) const;
  nlohmann::ordered_json to_json() const;
  std::string to_junit() const;
};

struct KernelSuiteSpec {
  std::vector<int> Ts{3, 10, 40};
  long samples = 10000;
  int fd_points = 100;
  int fd_max_order = 3;
  double fd_tolerance = 1e-5;
  int reference_points = 200;
  std::uint64_t seed = 1;
  KernelHooks hooks;
  /// When non-empty, these points replace the random sampler (each must have
  /// length T for the T it is used with; points of other lengths are ignored).
  std::vector<Eigen::VectorXd> points;
  int workers = 1;
};

/// Gradient floor, sup-norm, truncation, finite differences, Theta sandwich,
/// reference values and boundedness along a descent path, for each T.
VerificationReport certify_kernel(const KernelSuiteSpec& spec);

struct LipschitzEstimate {
  int order = 1;
  int T = 1;
  long samples = 0;
  double estimate = 0.0;
  std::string norm;  // "abs", "euclidean", "operator" or "flattened-frobenius"
};

/// Largest ratio ||D^k f(x) - D^k f(y)|| / ||x - y|| over `samples` seeded
/// pairs; pair s depends only on (seed, s). A lower estimate of ell_k.
LipschitzEstimate estimate_lipschitz(int k, int T, long samples, std::uint64_t seed = 1);

struct StochasticSpec {
  int points = 64;
  long bernoulli_queries = 100000;
  double bernoulli_prob = 0.125;
  int bernoulli_level = -1;  // t with y = (1, ..., 1, 0, ...); default T / 2
  int mss_pairs = 1000;
  std::uint64_t seed = 1;
};

/// Stochastic-setting parameters with exactly T links (value branch of the
/// min binding) and a chosen column count T'.
InstanceParams stochastic_test_params(int T, int columns, double eps = 0.1, double L = 1.0);

VerificationReport certify_stochastic(const Instance& inst, OracleKind kind, const StochasticSpec& spec);

struct ConcentrationSpec {
  std::vector<long> sphere_dims{32, 64, 128};
  std::vector<double> sphere_c{0.1, 0.2, 0.4};
  long sphere_trials = 100000;
  int T = 6;
  long d = 0;       // 0 selects ceil(200 T log T)
  int columns = 0;  // T' for the third tail; 0 skips it
  long trials = 10000;
  int order = 2;
  std::uint64_t seed = 1;
  int workers = 1;
};

VerificationReport certify_concentration(const ConcentrationSpec& spec);

}  // namespace hardchain
