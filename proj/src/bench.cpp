#include "hardchain/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "hardchain/errors.hpp"
#include "hardchain/parallel.hpp"
#include "hardchain/rng.hpp"

namespace hardchain {

using Eigen::VectorXd;

std::string to_string(SolverKind k) {
  switch (k) {
    case SolverKind::GD: return "gd";
    case SolverKind::SGD: return "sgd";
    case SolverKind::ChainFollower: return "chain";
    case SolverKind::RandomSearch: return "random";
  }
  return "?";
}

SolverKind solver_from_string(const std::string& s) {
  if (s == "gd") return SolverKind::GD;
  if (s == "sgd") return SolverKind::SGD;
  if (s == "chain" || s == "chain-follower") return SolverKind::ChainFollower;
  if (s == "random" || s == "random-search") return SolverKind::RandomSearch;
  throw std::invalid_argument("unknown solver '" + s + "' (expected gd, sgd, chain or random)");
}

namespace {

void check_spec(const SolverSpec& spec) {
  if (!(spec.step > 0.0)) throw std::invalid_argument("solver step must be > 0");
  if (spec.budget < 1) throw std::invalid_argument("query budget must be >= 1");
  if (spec.batch < 1) throw std::invalid_argument("batch must be >= 1");
  if (!(spec.eps > 0.0)) throw std::invalid_argument("eps target must be > 0");
}

// Tracks the iterate's support in chain coordinates and the bookkeeping every
// solver shares.
class Run {
 public:
  Run(const Instance& inst, const SolverSpec& spec, const std::string& solver)
      : inst_(inst), ledger_(spec.seed, false), start_(std::chrono::steady_clock::now()) {
    rec_.solver = solver;
    rec_.setting = to_string(inst.params().setting);
    rec_.p = inst.params().p;
    rec_.T = inst.T();
    rec_.d = inst.d();
    rec_.eps = spec.eps;
    rec_.seed = spec.seed;
    rec_.taint = inst.taint();
    rec_.prog_trace.emplace_back(0, 0);
  }

  QueryLedger& ledger() { return ledger_; }
  long queries() const { return static_cast<long>(ledger_.total()); }
  BenchRecord& rec() { return rec_; }

  int support(const VectorXd& x) const {
    return prog(inst_.chain_coords(x), inst_.identity_embedding() ? 0.0 : 1e-9);
  }

  // True gradient norm, not counted.
  double true_norm(const VectorXd& x) const {
    const auto& P = inst_.params();
    return P.alpha / P.beta * inst_.kernel().gradient(inst_.chain_coords(x)).norm();
  }

  void track(const VectorXd& x) {
    const int s = support(x);
    const int last = rec_.prog_trace.back().second;
    if (s != last) {
      rec_.max_prog_jump = std::max(rec_.max_prog_jump, s - last);
      rec_.prog_trace.emplace_back(queries(), s);
    }
  }

  BenchRecord finish(const VectorXd& x, bool success) {
    rec_.queries = queries();
    rec_.grad_norm = true_norm(x);
    rec_.prog_final = prog(inst_.chain_coords(x), 0.25);
    rec_.success = success;
    rec_.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    return rec_;
  }

 private:
  const Instance& inst_;
  QueryLedger ledger_;
  BenchRecord rec_;
  std::chrono::steady_clock::time_point start_;
};

double ambient_step(const Instance& inst, double kernel_step) {
  const auto& P = inst.params();
  return kernel_step * P.beta * P.beta / P.alpha;
}

}  // namespace

BenchRecord run_gd(const Instance& inst, const SolverSpec& spec) {
  check_spec(spec);
  Run run(inst, spec, "gd");
  const double h = ambient_step(inst, spec.step);
  VectorXd x = VectorXd::Zero(inst.d());
  while (true) {
    if (run.true_norm(x) <= spec.eps) return run.finish(x, true);
    if (run.queries() >= spec.budget) return run.finish(x, false);
    const AmbientDerivs b = det_query(inst, x, 1, run.ledger());
    x -= h * b.grad;
    run.track(x);
  }
}

BenchRecord run_sgd(const Instance& inst, const SolverSpec& spec) {
  check_spec(spec);
  if (spec.oracle == OracleKind::DetOrder) {
    SolverSpec s = spec;
    s.kind = SolverKind::GD;
    BenchRecord r = run_gd(inst, s);
    r.solver = "sgd";
    return r;
  }
  Run run(inst, spec, "sgd");
  const StochasticOracle oracle(inst, spec.oracle, spec.prob, spec.columns);
  const double h = ambient_step(inst, spec.step);
  const int T = inst.T();
  VectorXd x = VectorXd::Zero(inst.d());
  while (true) {
    if (run.true_norm(x) <= spec.eps) return run.finish(x, true);
    const long need = spec.exhaustive ? oracle.support() : spec.batch;
    if (run.queries() + need > spec.budget) return run.finish(x, false);

    const int before = run.support(x);
    const VectorXd y = inst.chain_coords(x);
    const bool eligible = before < T && inst.kernel().gradient(y)(before) != 0.0;

    VectorXd g = VectorXd::Zero(inst.d());
    if (spec.exhaustive) {
      const auto all = oracle.query_all(x, run.ledger());
      for (long j = 0; j < oracle.support(); ++j)
        g += oracle.weight(j) * all[static_cast<std::size_t>(j)].g;
    } else {
      for (int b = 0; b < spec.batch; ++b) g += oracle.query(x, run.ledger()).g;
      if (spec.batch > 1) g /= static_cast<double>(spec.batch);
    }
    x -= h * g;
    run.track(x);
    if (eligible) {
      run.rec().eligible_queries += need;
      if (run.support(x) > before) ++run.rec().advances;
    }
  }
}

BenchRecord run_chain_follower(const Instance& inst, const SolverSpec& spec) {
  check_spec(spec);
  Run run(inst, spec, "chain");
  const long d = inst.d();
  const int T = inst.T();
  const double beta = inst.params().beta;
  const double alpha = inst.params().alpha;
  // per-coordinate target, with room for a neighbour's later growth
  const double target = 0.4 * spec.eps / (2.0 * std::sqrt(static_cast<double>(T)));

  std::vector<VectorXd> dirs;
  std::vector<double> pos;
  std::vector<std::vector<std::pair<double, double>>> hist;  // (position, directional derivative)
  VectorXd x = VectorXd::Zero(d);
  VectorXd g;

  auto observe = [&](const VectorXd& grad) {
    g = grad;
    VectorXd r = grad;
    for (const auto& q : dirs) r -= q.dot(r) * q;
    const double rn = r.norm();
    if (rn > 1e-8 * grad.norm() && rn > 0.0 && static_cast<long>(dirs.size()) < d) {
      VectorXd q = -r / rn;
      int idx = 0;
      (inst.embedding().U.transpose() * q).cwiseAbs().maxCoeff(&idx);
      run.rec().reveal_order.push_back(idx + 1);
      dirs.push_back(std::move(q));
      pos.push_back(0.0);
      hist.emplace_back();
    }
  };

  if (run.true_norm(x) <= spec.eps) return run.finish(x, true);
  observe(det_query(inst, x, 1, run.ledger()).grad);
  for (std::size_t c = 0; c < dirs.size(); ++c) hist[c].emplace_back(0.0, g.dot(dirs[c]));

  std::size_t k = 0;  // first coordinate whose search is unfinished
  while (true) {
    if (run.true_norm(x) <= spec.eps) return run.finish(x, true);
    if (run.queries() >= spec.budget) return run.finish(x, false);
    if (dirs.empty()) return run.finish(x, false);

    std::size_t c;
    if (k < dirs.size()) {
      if (std::abs(g.dot(dirs[k])) <= target) {
        ++k;
        continue;
      }
      c = k;
    } else {
      c = 0;
      double worst = -1.0;
      for (std::size_t i = 0; i < dirs.size(); ++i) {
        const double a = std::abs(g.dot(dirs[i]));
        if (a > worst) worst = a, c = i;
      }
    }

    const double s = pos[c];
    const double dv = g.dot(dirs[c]);
    const auto& H = hist[c];
    double s_new;
    if (dv > 0.0) {
      // past the descent region: secant back toward the last negative sample
      double sl = s - dv * beta * beta / (constants::kGradientLipschitz * alpha);
      for (auto it = H.rbegin(); it != H.rend(); ++it)
        if (it->second < 0.0 && it->first < s) {
          sl = s - dv * (s - it->first) / (dv - it->second);
          break;
        }
      s_new = sl;
    } else if (s == 0.0) {
      s_new = 3.0 * beta;
    } else {
      double m = 3.0;
      if (H.size() >= 2) {
        const auto [sp, dp] = H[H.size() - 2];
        if (dp < 0.0 && sp >= 1.5 * beta && sp < s && std::abs(dp) > std::abs(dv))
          m = std::clamp(std::log(std::abs(dp) / std::abs(dv)) / std::log(s / sp), 1.0, 8.0);
      }
      const double f = std::pow(std::abs(dv) / (0.8 * target), 1.0 / m);
      s_new = s * std::clamp(f, 1.05, 4.0);
    }

    x += (s_new - s) * dirs[c];
    pos[c] = s_new;
    observe(det_query(inst, x, 1, run.ledger()).grad);
    hist[c].emplace_back(s_new, g.dot(dirs[c]));
    for (std::size_t i = hist.size(); i-- > 0 && hist[i].empty();) hist[i].emplace_back(0.0, g.dot(dirs[i]));
    run.track(x);
  }
}

BenchRecord run_random_search(const Instance& inst, const SolverSpec& spec) {
  check_spec(spec);
  Run run(inst, spec, "random");
  CounterRng rng(spec.seed, streams::kBench);
  const auto& P = inst.params();
  const double radius = P.R > 0.0 ? P.R : P.beta * std::sqrt(static_cast<double>(inst.T()));
  const long d = inst.d();
  VectorXd x = VectorXd::Zero(d);
  VectorXd best = x;
  double best_norm = run.true_norm(x);
  while (run.queries() < spec.budget) {
    for (long i = 0; i < d; ++i) x(i) = rng.normal();
    x *= radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(d)) / x.norm();
    const double n = det_query(inst, x, 1, run.ledger()).grad.norm();
    if (n < best_norm) best_norm = n, best = x;
    if (n <= spec.eps) return run.finish(x, true);
  }
  return run.finish(best, false);
}

BenchRecord run_solver(const Instance& inst, const SolverSpec& spec) {
  switch (spec.kind) {
    case SolverKind::GD: return run_gd(inst, spec);
    case SolverKind::SGD: return run_sgd(inst, spec);
    case SolverKind::ChainFollower: return run_chain_follower(inst, spec);
    case SolverKind::RandomSearch: return run_random_search(inst, spec);
  }
  throw std::logic_error("unreachable");
}

LinearFit fit_scaling(const std::vector<BenchRecord>& records, Predictor predictor) {
  if (records.size() < 3) throw std::invalid_argument("fit_scaling needs at least 3 records");
  std::vector<double> xs, ys;
  for (const auto& r : records) {
    const double p = predictor == Predictor::Eps ? r.eps : static_cast<double>(r.T);
    if (!(p > 0.0) || r.queries < 1) throw std::invalid_argument("fit_scaling needs positive predictor and query counts");
    xs.push_back(std::log(p));
    ys.push_back(std::log(static_cast<double>(r.queries)));
  }
  return least_squares(xs, ys);
}

Sweep sweep_eps(const std::vector<double>& eps, const ProblemConstants& c, const SolverSpec& spec, int workers) {
  Sweep out;
  out.predictor = Predictor::Eps;
  out.expected_slope = -static_cast<double>(c.p + 1) / c.p;
  out.records.resize(eps.size());
  std::vector<std::function<void()>> jobs;
  for (std::size_t i = 0; i < eps.size(); ++i)
    jobs.push_back([&, i] {
      ProblemConstants ci = c;
      ci.eps = eps[i];
      const InstanceParams P = params_for(Setting::Deterministic, ci);
      const Instance inst = Instance::kernel_units(P.T, std::max(1, c.p));
      BenchRecord r = run_solver(inst, spec);
      r.eps = eps[i];
      r.p = c.p;
      for (const auto& n : P.notes)
        if (n.find("clamped") != std::string::npos) r.taint.push_back(n);
      out.records[i] = std::move(r);
    });
  run_jobs(jobs, workers);
  out.fit = fit_scaling(out.records, out.predictor);
  return out;
}

Sweep sweep_T(const std::vector<int>& Ts, const SolverSpec& spec, int workers) {
  Sweep out;
  out.predictor = Predictor::T;
  out.expected_slope = 1.0;
  out.records.resize(Ts.size());
  std::vector<std::function<void()>> jobs;
  for (std::size_t i = 0; i < Ts.size(); ++i)
    jobs.push_back([&, i] { out.records[i] = run_solver(Instance::kernel_units(Ts[i], 1), spec); });
  run_jobs(jobs, workers);
  out.fit = fit_scaling(out.records, out.predictor);
  return out;
}

std::string csv_header() { return "solver,setting,p,T,d,eps,queries,grad_norm,prog_final,seed,taint"; }

std::string csv_row(const BenchRecord& r) {
  auto num = [](double v) { return nlohmann::json(v).dump(); };
  std::string taint;
  for (std::size_t i = 0; i < r.taint.size(); ++i) taint += (i ? ";" : "") + r.taint[i];
  if (taint.find_first_of(",\"\n") != std::string::npos) {
    std::string q = "\"";
    for (char ch : taint) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    taint = q + "\"";
  }
  std::ostringstream os;
  os << r.solver << ',' << r.setting << ',' << r.p << ',' << r.T << ',' << r.d << ',' << num(r.eps) << ','
     << r.queries << ',' << num(r.grad_norm) << ',' << r.prog_final << ',' << r.seed << ',' << taint;
  return os.str();
}

}  // namespace hardchain
