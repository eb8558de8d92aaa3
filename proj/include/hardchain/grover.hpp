#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include <json.hpp>

namespace hardchain {

inline constexpr long kGroverMaxN = 1L << 24;
inline constexpr long kSpeedupMaxN = 1L << 20;

struct MarkedOracle {
  long N = 1;
  std::vector<long> marked;

  void validate() const;
  bool is_marked(long i) const;
};

/// Dense amplitude vector.
struct StateVector {
  std::vector<std::complex<double>> amp;

  static StateVector uniform(long N);
  double norm() const;
  void phase_flip(const MarkedOracle& o);
  void reflect_about_mean();
};

struct GroverResult {
  double success = 0.0;
  double max_norm_drift = 0.0;  // largest | ||amp|| - 1 | over every step
  long oracle_calls = 0;
};

/// k rounds of (phase flip, inversion about the mean) from the uniform state.
GroverResult grover_run(const MarkedOracle& o, long k);

/// sin^2((2k+1) asin(sqrt(m/N))).
double grover_closed_form(long N, long m, long k);

/// ceil((pi/4) sqrt(N/m)).
long grover_iterations(long N, long m = 1);

struct SpeedupReport {
  double p = 1.0;
  long N = 1;
  long trials = 0;
  std::uint64_t seed = 0;
  double classical_mean = 0.0;
  double classical_sd = 0.0;  // standard error of the mean
  long quantum_queries = 0;
  double quantum_success = 0.0;
  double ratio = 0.0;  // classical_mean / quantum_queries

  nlohmann::ordered_json to_json() const;
};

/// Classical draws to the first revealing xi (uniform register of size 1/p, one
/// marked value) against simulated amplitude amplification.
SpeedupReport speedup_demo(double p, long trials, std::uint64_t seed);

/// 1/p as an integer register size; throws when 1/p is not an integer or too large.
long register_size(double p);

}  // namespace hardchain
