#include "hardchain/oracles.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "hardchain/errors.hpp"
#include "hardchain/rng.hpp"
#include "hardchain/smoothstep.hpp"

namespace hardchain {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string to_string(OracleKind k) {
  switch (k) {
    case OracleKind::DetOrder: return "det";
    case OracleKind::Bernoulli: return "bernoulli";
    case OracleKind::MeanHiding: return "meanhiding";
    case OracleKind::Mss: return "mss";
  }
  return "det";
}

OracleKind oracle_kind_from_string(const std::string& s) {
  if (s == "det") return OracleKind::DetOrder;
  if (s == "bernoulli") return OracleKind::Bernoulli;
  if (s == "meanhiding") return OracleKind::MeanHiding;
  if (s == "mss") return OracleKind::Mss;
  throw std::invalid_argument("unknown oracle '" + s + "' (expected det, bernoulli, meanhiding or mss)");
}

void QueryLedger::record(QueryRecord r) {
  r.query_index = total_;
  ++total_;
  ++counts_[static_cast<int>(r.kind)];
  if (keep_trace_) trace_.push_back(r);
}

void QueryLedger::merge(const QueryLedger& other) {
  const std::uint64_t base = total_;
  total_ += other.total_;
  for (int k = 0; k < 4; ++k) counts_[k] += other.counts_[k];
  if (!keep_trace_) return;
  for (auto r : other.trace_) {
    r.query_index += base;
    trace_.push_back(r);
  }
}

std::string QueryLedger::to_jsonl() const {
  std::ostringstream os;
  for (const auto& r : trace_) {
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(r.x_hash));
    nlohmann::ordered_json j = {{"query_index", r.query_index},
                                {"kind", to_string(r.kind)},
                                {"x_hash", hash},
                                {"prog_before", r.prog_before},
                                {"prog_after", r.prog_after}};
    if (r.j_or_xi < 0)
      j["j_or_xi"] = nullptr;
    else
      j["j_or_xi"] = r.j_or_xi;
    if (r.kind == OracleKind::Mss) {
      j["level_half"] = r.level_half;
      j["level_mismatch"] = r.level_mismatch;
    }
    os << j.dump() << "\n";
  }
  return os.str();
}

namespace {

int bundle_support(const KernelDerivs& d) {
  int s = 0;
  if (d.order >= 1) s = prog(d.grad, 0.0);
  if (d.order >= 2) {
    s = std::max(s, prog(d.hess.diag, 0.0));
    const int off = prog(d.hess.off, 0.0);
    if (off > 0) s = std::max(s, off + 1);
  }
  for (const auto& t : d.higher) s = std::max(s, t.support_end());
  return s;
}

}  // namespace

AmbientDerivs det_query(const Instance& inst, const VectorXd& x, int p, QueryLedger& ledger) {
  AmbientDerivs out = inst.tilde_eval(x, p);
  QueryRecord r;
  r.kind = OracleKind::DetOrder;
  r.x_hash = hash_vector(x);
  r.prog_before = prog(out.chain_point, 0.25);
  r.prog_after = bundle_support(out.chain);
  ledger.record(r);
  return out;
}

double MxRecipe::ex_coefficient(int c) const {
  if (columns == 1) return 1.0;
  return (c == 0 ? 1.0 : 0.0) - 2.0 * v_(0) * v_(c) / vv_;
}

VectorXd MxRecipe::column(int j) const {
  if (j < 0 || j >= 2 * columns) throw std::out_of_range("slot index out of range");
  const int c = slot[static_cast<std::size_t>(j)];
  if (c < 0) return VectorXd::Zero(embedding->d);
  if (columns == 1) return e_x;
  const VectorXd w = (c == 0) ? e_x : VectorXd(embedding->block(level).col(c - 1));
  return w - (2.0 * v_(c) / vv_) * s_;
}

MatrixXd MxRecipe::nonzero_columns() const {
  MatrixXd m(embedding->d, columns);
  for (int j = 0; j < 2 * columns; ++j)
    if (slot[static_cast<std::size_t>(j)] >= 0) m.col(slot[static_cast<std::size_t>(j)]) = column(j);
  return m;
}

MxRecipe build_mx(const Instance& inst, const VectorXd& x, int columns, int level) {
  const int T = inst.T();
  if (level < 1 || level > T) throw std::out_of_range("M_x level must lie in [1, T]");
  if (columns < 1) throw std::invalid_argument("column count must be >= 1");
  const auto& emb = inst.embedding();
  if (columns > 1 && emb.block_dim < columns - 1)
    throw InfeasibleParameters("instance block map holds " + std::to_string(emb.block_dim) +
                               " directions per level; M_x needs " + std::to_string(columns - 1) +
                               " (d >= 2 T' T + T)");
  MxRecipe r;
  r.level = level;
  r.columns = columns;
  r.embedding = inst.embedding_ptr();
  const double partial = inst.kernel().gradient(inst.chain_coords(x))(level - 1);
  r.sign = partial < 0.0 ? -1.0 : 1.0;
  r.gamma = std::abs(partial) * inst.params().alpha / inst.params().beta;
  r.e_x = r.sign * emb.U.col(level - 1);

  if (columns > 1) {
    // Householder reflection sending e_1 to the uniform vector: v = e_1 - 1/sqrt(T') * ones
    const double inv = 1.0 / std::sqrt(static_cast<double>(columns));
    r.v_ = VectorXd::Constant(columns, -inv);
    r.v_(0) += 1.0;
    r.vv_ = r.v_.squaredNorm();
    r.s_ = r.v_(0) * r.e_x + emb.block(level).leftCols(columns - 1) * r.v_.tail(columns - 1);
  }

  // seeded Fisher-Yates over [2T'], keyed by (instance seed, level)
  std::vector<int> perm(static_cast<std::size_t>(2 * columns));
  std::iota(perm.begin(), perm.end(), 0);
  CounterRng rng(inst.seed(), streams::kSlots | (static_cast<std::uint64_t>(level) << 20));
  for (int k = 2 * columns - 1; k > 0; --k) {
    const auto pick = static_cast<int>(rng.uniform() * (k + 1));
    std::swap(perm[static_cast<std::size_t>(k)], perm[static_cast<std::size_t>(pick)]);
  }
  r.slot.resize(perm.size());
  for (std::size_t j = 0; j < perm.size(); ++j) r.slot[j] = perm[j] < columns ? perm[j] : -1;
  return r;
}

MxRecipe build_mx(const Instance& inst, const VectorXd& x, int columns) {
  const int level = prog(inst.chain_coords(x), 0.25) + 1;
  if (level > inst.T()) throw std::out_of_range("prog = T: no component left to hide");
  return build_mx(inst, x, columns, level);
}

StochasticOracle::StochasticOracle(const Instance& inst, OracleKind kind, double prob, int columns)
    : inst_(&inst), kind_(kind), prob_(prob), columns_(columns) {
  if (kind == OracleKind::DetOrder) throw std::invalid_argument("det is not a stochastic oracle");
  if (kind == OracleKind::Bernoulli) {
    if (!(prob > 0.0 && prob <= 1.0)) throw std::invalid_argument("Bernoulli prob must lie in (0, 1]");
    columns_ = 1;
  } else {
    if (columns_ <= 0) columns_ = std::max(inst.params().columns, 1);
  }
}

long StochasticOracle::support() const {
  return kind_ == OracleKind::Bernoulli ? 2 : 2L * columns_;
}

double StochasticOracle::weight(long j) const {
  if (kind_ == OracleKind::Bernoulli) return j == 1 ? prob_ : 1.0 - prob_;
  return 1.0 / static_cast<double>(support());
}

StochasticResponse StochasticOracle::bernoulli(const VectorXd& y, bool xi) const {
  StochasticResponse r;
  const int T = inst_->T();
  const int pq = prog(y, 0.25);
  r.level_quarter = r.level = pq + 1;
  r.level_half = prog(y, 0.5) + 1;
  r.j_or_xi = xi ? 1 : 0;
  VectorXd chain = inst_->kernel().gradient(y);
  const double scale = xi ? 1.0 / prob_ : 0.0;
  for (int i = pq; i < T; ++i) chain(i) *= scale;
  r.chain = chain;
  const double ab = inst_->params().alpha / inst_->params().beta;
  r.g = ab * (inst_->embedding().U * chain);
  return r;
}

StochasticResponse StochasticOracle::hidden(const VectorXd& x, const VectorXd& y, long j) const {
  StochasticResponse r;
  const int T = inst_->T();
  const auto& P = inst_->params();
  const double ab = P.alpha / P.beta;
  r.level_quarter = prog(y, 0.25) + 1;
  r.level_half = prog(y, 0.5) + 1;
  r.j_or_xi = j;
  const bool mss = kind_ == OracleKind::Mss;
  r.level = mss ? r.level_half : r.level_quarter;
  r.level_mismatch = mss && r.level_half != r.level_quarter;

  const VectorXd grad = inst_->kernel().gradient(y);
  r.chain = grad;
  r.g = ab * (inst_->embedding().U * grad);
  if (r.level > T) return r;

  r.theta = mss ? theta(r.level, y, 1.0) : 1.0;
  if (r.theta == 0.0) return r;

  const MxRecipe m = build_mx(*inst_, x, columns_, r.level);
  const double amp = 2.0 * m.gamma * std::sqrt(static_cast<double>(columns_));
  r.g += r.theta * (amp * m.column(static_cast<int>(j)) - m.gamma * m.e_x);
  const int c = m.slot[static_cast<std::size_t>(j)];
  const double along = c < 0 ? 0.0 : amp * m.ex_coefficient(c);
  const auto i = static_cast<Eigen::Index>(r.level - 1);
  r.chain(i) = grad(i) + r.theta * (m.sign * along / ab - grad(i));
  return r;
}

StochasticResponse StochasticOracle::query(const VectorXd& x, QueryLedger& ledger,
                                           std::optional<long> j) const {
  const VectorXd y = inst_->chain_coords(x);
  long draw;
  if (j) {
    if (*j < 0 || *j >= support()) throw std::out_of_range("randomness index outside the support");
    draw = *j;
  } else {
    CounterRng rng(ledger.seed(), streams::kQuery + ledger.total());
    if (kind_ == OracleKind::Bernoulli)
      draw = rng.uniform() < prob_ ? 1 : 0;
    else
      draw = static_cast<long>(rng.uniform() * static_cast<double>(support()));
  }
  StochasticResponse r = kind_ == OracleKind::Bernoulli ? bernoulli(y, draw == 1) : hidden(x, y, draw);

  QueryRecord rec;
  rec.kind = kind_;
  rec.x_hash = hash_vector(x);
  rec.prog_before = prog(y, 0.25);
  rec.prog_after = prog(r.chain, 0.0);
  rec.j_or_xi = draw;
  if (kind_ == OracleKind::Mss) {
    rec.level_half = r.level_half;
    rec.level_mismatch = r.level_mismatch;
  }
  ledger.record(rec);
  return r;
}

std::vector<StochasticResponse> StochasticOracle::query_all(const VectorXd& x, QueryLedger& ledger) const {
  std::vector<StochasticResponse> out;
  out.reserve(static_cast<std::size_t>(support()));
  for (long j = 0; j < support(); ++j) out.push_back(query(x, ledger, j));
  return out;
}

bool subspace_audit(const Instance& inst, const VectorXd& x, int t) {
  const int T = inst.T();
  if (t < 1 || t > T) throw std::out_of_range("subspace_audit needs 1 <= t <= T");
  const VectorXd y = inst.chain_coords(x);  // <x, u_i> / beta
  for (int i = t; i < T; ++i)
    if (std::abs(y(i)) >= 0.25) return true;
  return false;
}

}  // namespace hardchain
