#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hardchain/instance.hpp"

namespace hardchain {

enum class OracleKind { DetOrder, Bernoulli, MeanHiding, Mss };

std::string to_string(OracleKind k);
OracleKind oracle_kind_from_string(const std::string& s);

struct QueryRecord {
  std::uint64_t query_index = 0;
  OracleKind kind = OracleKind::DetOrder;
  std::uint64_t x_hash = 0;
  int prog_before = 0;  // prog_{1/4} of the query point, chain coordinates
  int prog_after = 0;   // last nonzero chain coordinate of the response
  long j_or_xi = -1;    // -1 for deterministic queries
  int level_half = 0;   // prog_{1/2} + 1 (mss only, 0 otherwise)
  bool level_mismatch = false;
};

/// Append-only count and trace of oracle calls. Stochastic draws for query n
/// come from CounterRng(seed, streams::kQuery + n).
class QueryLedger {
 public:
  explicit QueryLedger(std::uint64_t seed = 0, bool keep_trace = true)
      : seed_(seed), keep_trace_(keep_trace) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t total() const { return total_; }
  std::uint64_t count(OracleKind k) const { return counts_[static_cast<int>(k)]; }
  const std::vector<QueryRecord>& trace() const { return trace_; }

  void record(QueryRecord r);
  /// Append another shard's queries after this one's, renumbering its indices.
  void merge(const QueryLedger& other);
  std::string to_jsonl() const;

 private:
  std::uint64_t seed_;
  bool keep_trace_;
  std::uint64_t total_ = 0;
  std::uint64_t counts_[4] = {0, 0, 0, 0};
  std::vector<QueryRecord> trace_;
};

/// Derivative bundle of f~ at x up to order p, counted as one query.
AmbientDerivs det_query(const Instance& inst, const Eigen::VectorXd& x, int p, QueryLedger& ledger);

/// Recipe for the d x 2T' matrix M_x whose columns hide the (level)-th gradient
/// component: T' orthonormal columns in span{e_x, V_level} and T' zero columns.
struct MxRecipe {
  int level = 0;          // 1-based chain index i_x
  int columns = 1;        // T'
  double gamma = 0.0;     // |component| in ambient units
  double sign = 1.0;      // sign of the chain partial
  Eigen::VectorXd e_x;    // sign * u^(level)
  std::vector<int> slot;  // slot j in [0, 2T') -> column index, or -1 for a zero column
  std::shared_ptr<const RotationEmbedding> embedding;

  /// Householder coefficient Q_{0c}: the e_x coordinate of column c.
  double ex_coefficient(int c) const;
  /// m^(j) for j in [0, 2T').
  Eigen::VectorXd column(int j) const;
  Eigen::MatrixXd nonzero_columns() const;

 private:
  friend MxRecipe build_mx(const Instance&, const Eigen::VectorXd&, int, int);
  double vv_ = 0.0;
  Eigen::VectorXd s_;  // sum_k v_k w_k
  Eigen::VectorXd v_;
};

/// Recipe at an explicit level; `x` supplies the gradient component.
MxRecipe build_mx(const Instance& inst, const Eigen::VectorXd& x, int columns, int level);
/// Recipe at level prog_{beta/4}(x) + 1.
MxRecipe build_mx(const Instance& inst, const Eigen::VectorXd& x, int columns);

struct StochasticResponse {
  Eigen::VectorXd g;      // ambient
  Eigen::VectorXd chain;  // beta/alpha * U^T g, computed from the construction
  long j_or_xi = -1;
  int level = 0;          // level the construction used; T + 1 means exact gradient
  int level_quarter = 0;  // prog_{1/4} + 1
  int level_half = 0;     // prog_{1/2} + 1
  bool level_mismatch = false;
  double theta = 1.0;
};

/// Bernoulli, mean-hiding and smoothed-mss stochastic gradient oracles.
class StochasticOracle {
 public:
  /// `prob` is used by Bernoulli only; `columns` (T') by the other two and
  /// defaults to the instance's column count.
  StochasticOracle(const Instance& inst, OracleKind kind, double prob = 1.0, int columns = 0);

  OracleKind kind() const { return kind_; }
  int columns() const { return columns_; }
  double prob() const { return prob_; }
  /// Size of the finite randomness support: 2 for Bernoulli, 2T' otherwise.
  long support() const;
  /// Probability weight of outcome j under the query distribution.
  double weight(long j) const;

  /// One query. `j` pins the randomness (xi in {0,1} for Bernoulli, slot for
  /// the others); otherwise it is drawn from the ledger's stream.
  StochasticResponse query(const Eigen::VectorXd& x, QueryLedger& ledger,
                           std::optional<long> j = std::nullopt) const;
  /// Responses for every outcome in the support (counted as support() queries).
  std::vector<StochasticResponse> query_all(const Eigen::VectorXd& x, QueryLedger& ledger) const;

 private:
  StochasticResponse bernoulli(const Eigen::VectorXd& y, bool xi) const;
  StochasticResponse hidden(const Eigen::VectorXd& x, const Eigen::VectorXd& y, long j) const;

  const Instance* inst_;
  OracleKind kind_;
  double prob_;
  int columns_;
};

/// True iff some i in (t, T] has |<x, u^(i)>| >= beta/4.
bool subspace_audit(const Instance& inst, const Eigen::VectorXd& x, int t);

}  // namespace hardchain
