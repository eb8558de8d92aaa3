#include "hardchain/grover.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "hardchain/rng.hpp"

namespace hardchain {

namespace {

// Neumaier-compensated sum; plain accumulation drifts by ~N eps over long runs.
struct CompensatedSum {
  double sum = 0.0, c = 0.0;
  void add(double x) {
    const double t = sum + x;
    c += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + c; }
};

}  // namespace

void MarkedOracle::validate() const {
  if (N < 1) throw std::invalid_argument("search space must be non-empty");
  if (N > kGroverMaxN) throw std::invalid_argument("N = " + std::to_string(N) + " exceeds the dense limit 2^24");
  if (marked.empty() || static_cast<long>(marked.size()) > N)
    throw std::invalid_argument("need 1 <= |marked| <= N");
  for (long m : marked)
    if (m < 0 || m >= N) throw std::invalid_argument("marked index out of range");
  std::vector<long> s = marked;
  std::sort(s.begin(), s.end());
  if (std::adjacent_find(s.begin(), s.end()) != s.end()) throw std::invalid_argument("duplicate marked index");
}

bool MarkedOracle::is_marked(long i) const { return std::find(marked.begin(), marked.end(), i) != marked.end(); }

StateVector StateVector::uniform(long N) {
  StateVector s;
  s.amp.assign(static_cast<std::size_t>(N), std::complex<double>(1.0 / std::sqrt(static_cast<double>(N)), 0.0));
  return s;
}

double StateVector::norm() const {
  CompensatedSum s;
  for (const auto& a : amp) s.add(std::norm(a));
  return std::sqrt(s.value());
}

void StateVector::phase_flip(const MarkedOracle& o) {
  for (long m : o.marked) amp[static_cast<std::size_t>(m)] = -amp[static_cast<std::size_t>(m)];
}

void StateVector::reflect_about_mean() {
  CompensatedSum re, im;
  for (const auto& a : amp) re.add(a.real()), im.add(a.imag());
  const std::complex<double> mean = std::complex<double>(re.value(), im.value()) / static_cast<double>(amp.size());
  for (auto& a : amp) a = 2.0 * mean - a;
}

GroverResult grover_run(const MarkedOracle& o, long k) {
  o.validate();
  if (k < 0) throw std::invalid_argument("iteration count must be >= 0");
  StateVector s = StateVector::uniform(o.N);
  GroverResult r;
  r.max_norm_drift = std::abs(s.norm() - 1.0);
  for (long it = 0; it < k; ++it) {
    s.phase_flip(o);
    ++r.oracle_calls;
    r.max_norm_drift = std::max(r.max_norm_drift, std::abs(s.norm() - 1.0));
    s.reflect_about_mean();
    r.max_norm_drift = std::max(r.max_norm_drift, std::abs(s.norm() - 1.0));
  }
  CompensatedSum succ;
  for (long m : o.marked) succ.add(std::norm(s.amp[static_cast<std::size_t>(m)]));
  r.success = succ.value();
  return r;
}

double grover_closed_form(long N, long m, long k) {
  const double theta = std::asin(std::sqrt(static_cast<double>(m) / static_cast<double>(N)));
  const double s = std::sin(static_cast<double>(2 * k + 1) * theta);
  return s * s;
}

long grover_iterations(long N, long m) {
  return static_cast<long>(std::ceil(std::numbers::pi / 4.0 * std::sqrt(static_cast<double>(N) / m)));
}

long register_size(double p) {
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("p must lie in (0, 1]");
  const double inv = 1.0 / p;
  const double r = std::round(inv);
  if (std::abs(inv - r) > 1e-9 * r) throw std::invalid_argument("1/p must be an integer");
  if (r > static_cast<double>(kSpeedupMaxN)) throw std::invalid_argument("1/p exceeds 2^20");
  return static_cast<long>(r);
}

SpeedupReport speedup_demo(double p, long trials, std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  SpeedupReport rep;
  rep.N = register_size(p);
  rep.p = 1.0 / static_cast<double>(rep.N);
  rep.trials = trials;
  rep.seed = seed;

  // the revealing value is register index 0
  const auto N = static_cast<std::uint64_t>(rep.N);
  double sum = 0.0, sq = 0.0;
  for (long t = 0; t < trials; ++t) {
    CounterRng rng(seed, streams::kGrover + static_cast<std::uint64_t>(t));
    long draws = 1;
    while (rng() % N != 0) ++draws;
    sum += static_cast<double>(draws);
    sq += static_cast<double>(draws) * static_cast<double>(draws);
  }
  rep.classical_mean = sum / static_cast<double>(trials);
  const double var = trials > 1 ? (sq - sum * rep.classical_mean) / static_cast<double>(trials - 1) : 0.0;
  rep.classical_sd = std::sqrt(std::max(var, 0.0) / static_cast<double>(trials));

  rep.quantum_queries = grover_iterations(rep.N);
  rep.quantum_success = grover_run({rep.N, {0}}, rep.quantum_queries).success;
  rep.ratio = rep.classical_mean / static_cast<double>(rep.quantum_queries);
  return rep;
}

nlohmann::ordered_json SpeedupReport::to_json() const {
  nlohmann::ordered_json j;
  j["p"] = p;
  j["classical_mean"] = classical_mean;
  j["quantum_queries"] = quantum_queries;
  j["quantum_success"] = quantum_success;
  j["ratio"] = ratio;
  j["N"] = N;
  j["trials"] = trials;
  j["classical_sd"] = classical_sd;
  return j;
}

}  // namespace hardchain
