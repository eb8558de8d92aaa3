#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hardchain/instance.hpp"
#include "hardchain/oracles.hpp"
#include "hardchain/stats.hpp"

namespace hardchain {

enum class SolverKind { GD, SGD, ChainFollower, RandomSearch };

std::string to_string(SolverKind k);
SolverKind solver_from_string(const std::string& s);

struct SolverSpec {
  SolverKind kind = SolverKind::GD;
  /// Step in kernel units; the ambient step is step * beta^2 / alpha.
  double step = 1.0 / constants::kGradientLipschitz;
  int batch = 1;
  bool exhaustive = false;  // SGD: average over the whole randomness support
  double eps = 0.9;         // stop once the true ||grad f~|| <= eps
  long budget = 1000000;
  OracleKind oracle = OracleKind::DetOrder;
  double prob = 1.0;  // Bernoulli
  int columns = 0;    // mean-hiding / mss column count, 0 = instance default
  std::uint64_t seed = 1;
};

struct BenchRecord {
  std::string solver;
  std::string setting;
  int p = 1;
  int T = 0;
  long d = 0;
  double eps = 0.0;
  long queries = 0;
  double grad_norm = 0.0;
  int prog_final = 0;  // prog_{1/4} of the final iterate, chain coordinates
  std::uint64_t seed = 0;
  std::vector<std::string> taint;

  bool success = false;
  int max_prog_jump = 0;                          // largest support growth in one query
  std::vector<std::pair<long, int>> prog_trace;   // (query count, support) at each change
  std::vector<int> reveal_order;                  // chain coordinates in order of discovery
  long eligible_queries = 0;                      // SGD: queries whose next exact component is nonzero
  long advances = 0;                              // SGD: support advances
  double wall_seconds = 0.0;                      // sidecar only
};

BenchRecord run_gd(const Instance& inst, const SolverSpec& spec);
BenchRecord run_sgd(const Instance& inst, const SolverSpec& spec);
BenchRecord run_chain_follower(const Instance& inst, const SolverSpec& spec);
BenchRecord run_random_search(const Instance& inst, const SolverSpec& spec);
BenchRecord run_solver(const Instance& inst, const SolverSpec& spec);

enum class Predictor { Eps, T };

/// Least squares of log(queries) on log(eps) or log(T); needs >= 3 records.
LinearFit fit_scaling(const std::vector<BenchRecord>& records, Predictor predictor);

struct Sweep {
  std::vector<BenchRecord> records;
  LinearFit fit;
  Predictor predictor = Predictor::Eps;
  double expected_slope = 0.0;
};

/// Deterministic p = 1 sweep over eps: T from params_for(c with eps), run in
/// kernel units with the kernel target spec.eps. Records carry the swept eps.
Sweep sweep_eps(const std::vector<double>& eps, const ProblemConstants& c, const SolverSpec& spec, int workers = 1);
/// Sweep over chain length in kernel units.
Sweep sweep_T(const std::vector<int>& Ts, const SolverSpec& spec, int workers = 1);

std::string csv_header();
std::string csv_row(const BenchRecord& r);

}  // namespace hardchain
