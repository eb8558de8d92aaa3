#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hardchain/bench.hpp"
#include "hardchain/errors.hpp"
#include "hardchain/grover.hpp"
#include "hardchain/instance.hpp"
#include "hardchain/oracles.hpp"
#include "hardchain/parallel.hpp"
#include "hardchain/verify.hpp"

#ifndef HARDCHAIN_VERSION
#define HARDCHAIN_VERSION "0.0.0"
#endif

using namespace hardchain;
using ojson = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitInfeasible = 3;

const std::set<std::string> kCommands{"gen", "eval", "verify", "bench", "grover"};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Context {
  std::vector<std::string> argv;  // canonical command, "hardchain" first
  std::uint64_t seed = 1;
  int workers = 1;
  std::string out;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
};

std::string join_command(const std::vector<std::string>& argv);

ojson meta(const Context& ctx, const std::vector<std::string>& taint) {
  ojson m;
  m["tool"] = "hardchain";
  m["version"] = HARDCHAIN_VERSION;
  m["argv"] = ctx.argv;
  m["command"] = join_command(ctx.argv);
  m["seed"] = ctx.seed;
  m["taint"] = taint;
  return m;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot write " + path);
  f << text;
}

// Wall-clock data lives only here, never in the artifact itself.
void write_sidecar(const Context& ctx, const std::string& artifact, ojson extra = ojson::object()) {
  if (artifact.empty() || artifact == "-") return;
  const std::time_t now = std::time(nullptr);
  std::ostringstream ts;
  ts << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
  ojson s;
  s["artifact"] = artifact;
  s["finished_utc"] = ts.str();
  s["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - ctx.start).count();
  for (auto& [k, v] : extra.items()) s[k] = v;
  write_text(artifact + ".sidecar.json", s.dump(2) + "\n");
}

std::string emit_json(const ojson& j) { return j.dump(2) + "\n"; }

std::string join_command(const std::vector<std::string>& argv) {
  std::string s;
  for (const auto& a : argv) {
    if (!s.empty()) s += ' ';
    const bool plain = !a.empty() && a.find_first_of(" \t\"'\\$`") == std::string::npos;
    if (plain) {
      s += a;
    } else {
      s += '\'';
      for (char c : a) s += c == '\'' ? std::string("'\\''") : std::string(1, c);
      s += '\'';
    }
  }
  return s;
}

Eigen::VectorXd read_point(const std::string& path, long d) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot read x file " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  const std::string text = buf.str();
  std::vector<double> v;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '[') {
    try {
      v = nlohmann::json::parse(text).get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw UsageError("malformed x: " + std::string(e.what()));
    }
  } else {
    std::istringstream is(text);
    std::string tok;
    while (is >> tok) {
      std::size_t used = 0;
      double x = 0.0;
      try {
        x = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size()) throw UsageError("malformed x: token '" + tok + "' is not a number");
      v.push_back(x);
    }
  }
  if (static_cast<long>(v.size()) != d)
    throw UsageError("malformed x: " + std::to_string(v.size()) + " entries, instance has d = " + std::to_string(d));
  for (double x : v)
    if (!std::isfinite(x)) throw UsageError("malformed x: non-finite entry");
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

ojson ledger_json(const QueryLedger& l) {
  ojson j;
  j["delta"] = l.total();
  j["queries"] = ojson::array();
  std::istringstream is(l.to_jsonl());
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) j["queries"].push_back(ojson::parse(line));
  return j;
}

// ---------------------------------------------------------------- gen

struct GenArgs {
  std::string setting = "det";
  int p = 1;
  double delta = 1.0, lp = 1.0, lbar = 1.0, sigma = 1.0, eps = 0.1;
  double ell = 0.0;
  long d = 0;
  bool below_floor = false;
  int p_max = 2;
  double c0 = constants::kDeterministicC0;
};

ProblemConstants constants_of(const GenArgs& a) {
  ProblemConstants c;
  c.p = a.p;
  c.delta = a.delta;
  c.lipschitz = a.lp;
  c.lbar = a.lbar;
  c.sigma = a.sigma;
  c.eps = a.eps;
  if (a.ell > 0.0) c.ell = a.ell;
  return c;
}

int cmd_gen(const Context& ctx, const GenArgs& a) {
  const Setting setting = setting_from_string(a.setting);
  const ProblemConstants c = constants_of(a);
  const InstanceParams P = params_for(setting, c);
  InstanceOptions o;
  if (a.d > 0) o.d = a.d;
  o.allow_below_floor = a.below_floor;
  o.p_max = std::max(a.p_max, a.p);
  const Instance inst = Instance::create(P, ctx.seed, o);
  const std::string prefix = ctx.out.empty() ? "instance" : ctx.out;
  const SavedInstance saved = save_instance(inst, prefix);

  std::ifstream in(saved.header_path);
  ojson header = ojson::parse(in);
  in.close();
  header["meta"] = meta(ctx, inst.taint());
  write_text(saved.header_path, emit_json(header));
  write_sidecar(ctx, saved.header_path);

  const double lb = lower_bound_value(setting, c, a.c0);
  std::ostringstream t;
  t << std::setprecision(10);
  auto row = [&](const std::string& k, const auto& v) { t << std::left << std::setw(18) << k << v << "\n"; };
  row("setting", to_string(setting));
  row("alpha", P.alpha);
  row("beta", P.beta);
  row("T", P.T);
  row("script_T", P.columns);
  row("R", P.R);
  row("R_hat", P.R_hat);
  row("d_floor", P.d_floor);
  row("d", inst.d());
  row("lower_bound_value", lb);
  row("c0", a.c0);
  row("payload_fnv1a64", [&] {
    std::ostringstream h;
    h << std::hex << std::setw(16) << std::setfill('0') << saved.payload_hash;
    return h.str();
  }());
  row("header", saved.header_path);
  row("payload", saved.payload_path);
  for (const auto& n : P.notes) row("note", n);
  for (const auto& tt : inst.taint()) row("taint", tt);
  std::cout << t.str();
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string instance;
  bool at_zero = false;
  std::string x_file;
  int order = 1;
  std::string oracle = "det";
  double prob = 0.5;
  int columns = 0;
  bool all_j = false;
  long j = -1;
  long samples = 1;
};

ojson tensors_json(const AmbientDerivs& b) {
  ojson j;
  const KernelDerivs& k = b.chain;
  if (k.order >= 1) j["gradient"] = to_vec(k.grad);
  if (k.order >= 2) {
    j["hessian_diag"] = to_vec(k.hess.diag);
    j["hessian_off"] = to_vec(k.hess.off);
  }
  ojson hi = ojson::array();
  for (const auto& t : k.higher) {
    ojson e;
    e["order"] = t.order;
    e["entries"] = ojson::array();
    for (const auto& [idx, v] : t.entries) {
      if (v == 0.0) continue;
      ojson ent = ojson::array();
      for (int i : idx) ent.push_back(i + 1);
      ent.push_back(v);
      e["entries"].push_back(ent);
    }
    hi.push_back(e);
  }
  if (!hi.empty()) j["higher"] = hi;
  return j;
}

int cmd_eval(const Context& ctx, const EvalArgs& a) {
  if (a.instance.empty()) throw UsageError("eval needs --instance");
  if (a.at_zero == !a.x_file.empty()) throw UsageError("give exactly one of --at-zero and --x");
  const Instance inst = load_instance(a.instance);
  const Eigen::VectorXd x = a.at_zero ? Eigen::VectorXd::Zero(inst.d()) : read_point(a.x_file, inst.d());
  QueryLedger ledger(ctx.seed);

  ojson out;
  out["meta"] = meta(ctx, inst.taint());
  out["instance"] = a.instance;
  out["d"] = inst.d();
  out["T"] = inst.T();
  out["x_fnv1a64"] = [&] {
    std::ostringstream h;
    h << std::hex << std::setw(16) << std::setfill('0') << hash_vector(x);
    return h.str();
  }();

  const OracleKind kind = oracle_kind_from_string(a.oracle);
  if (kind == OracleKind::DetOrder) {
    if (a.order < 0 || a.order > inst.kernel().params().p_max)
      throw UnsupportedOrder("unsupported order " + std::to_string(a.order) + " (p_max = " +
                             std::to_string(inst.kernel().params().p_max) + ")");
    const AmbientDerivs b = det_query(inst, x, a.order, ledger);
    out["oracle"] = "det";
    out["order"] = a.order;
    out["value"] = b.value;
    if (a.order >= 1) out["gradient"] = to_vec(b.grad);
    if (a.order >= 2 && inst.d() <= 256) {
      const Eigen::MatrixXd H = b.hessian_dense();
      ojson rows = ojson::array();
      for (Eigen::Index i = 0; i < H.rows(); ++i) rows.push_back(to_vec(H.row(i).transpose()));
      out["hessian"] = rows;
    }
    ojson sc = ojson::array();
    for (int k = 0; k <= a.order; ++k) sc.push_back(b.scale(k));
    out["scale"] = sc;
    out["chain_point"] = to_vec(b.chain_point);
    out["chain"] = tensors_json(b);
  } else {
    const StochasticOracle oracle(inst, kind, a.prob, a.columns);
    out["oracle"] = to_string(kind);
    if (kind == OracleKind::Bernoulli) out["prob"] = a.prob;
    else out["columns"] = oracle.columns();
    std::vector<StochasticResponse> rs;
    std::vector<double> weights;
    if (a.all_j) {
      rs = oracle.query_all(x, ledger);
      for (long j = 0; j < oracle.support(); ++j) weights.push_back(oracle.weight(j));
    } else if (a.j >= 0) {
      if (a.j >= oracle.support()) throw UsageError("--j outside the randomness support");
      rs.push_back(oracle.query(x, ledger, a.j));
    } else {
      if (a.samples < 1) throw UsageError("--samples must be >= 1");
      for (long s = 0; s < a.samples; ++s) rs.push_back(oracle.query(x, ledger));
    }
    ojson samples = ojson::array();
    for (std::size_t i = 0; i < rs.size(); ++i) {
      ojson e;
      e["j"] = rs[i].j_or_xi;
      if (!weights.empty()) e["weight"] = weights[i];
      e["level"] = rs[i].level;
      e["g"] = to_vec(rs[i].g);
      samples.push_back(e);
    }
    out["samples"] = samples;
    const Eigen::VectorXd grad = inst.tilde_gradient(x);
    out["gradient"] = to_vec(grad);
    if (a.all_j) {
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(inst.d());
      for (std::size_t i = 0; i < rs.size(); ++i) mean += weights[i] * rs[i].g;
      out["mean"] = to_vec(mean);
      out["max_abs_mean_minus_gradient"] = (mean - grad).cwiseAbs().maxCoeff();
    }
  }
  out["ledger"] = ledger_json(ledger);
  write_text(ctx.out, emit_json(out));
  write_sidecar(ctx, ctx.out);
  return kExitOk;
}

// ---------------------------------------------------------------- verify

struct VerifyArgs {
  std::string suite = "kernel";
  std::vector<int> Ts;
  long samples = 10000;
  int fd_points = 100;
  int reference_points = 200;
  int columns = 0;
  long d = 0;
  std::vector<std::string> oracles{"meanhiding", "mss", "bernoulli"};
  int points = 64;
  long bernoulli_queries = 100000;
  double bernoulli_prob = 0.125;
  int mss_pairs = 1000;
  long trials = 10000;
  long sphere_trials = 100000;
  std::vector<long> dims{32, 64, 128};
  std::vector<double> cs{0.1, 0.2, 0.4};
  std::string junit;
};

int cmd_verify(const Context& ctx, const VerifyArgs& a) {
  VerificationReport rep;
  std::vector<std::string> taint;
  if (a.suite == "kernel") {
    KernelSuiteSpec s;
    if (!a.Ts.empty()) s.Ts = a.Ts;
    s.samples = a.samples;
    s.fd_points = a.fd_points;
    s.reference_points = a.reference_points;
    s.seed = ctx.seed;
    s.workers = ctx.workers;
    rep = certify_kernel(s);
  } else if (a.suite == "stochastic") {
    const int T = a.Ts.empty() ? 8 : a.Ts.front();
    const int cols = a.columns > 0 ? a.columns : 2 * T;
    const InstanceParams P = stochastic_test_params(T, cols);
    InstanceOptions o;
    o.d = a.d > 0 ? a.d : 4L * T * T;
    o.allow_below_floor = true;
    const Instance inst = Instance::create(P, ctx.seed, o);
    taint = inst.taint();
    StochasticSpec s;
    s.points = a.points;
    s.bernoulli_queries = a.bernoulli_queries;
    s.bernoulli_prob = a.bernoulli_prob;
    s.mss_pairs = a.mss_pairs;
    s.seed = ctx.seed;
    rep.suite = "stochastic";
    std::vector<VerificationReport> parts(a.oracles.size());
    std::vector<std::function<void()>> jobs;
    for (std::size_t i = 0; i < a.oracles.size(); ++i) {
      const OracleKind k = oracle_kind_from_string(a.oracles[i]);
      if (k == OracleKind::DetOrder) throw UsageError("the stochastic suite needs a stochastic oracle");
      jobs.push_back([&, i, k] { parts[i] = certify_stochastic(inst, k, s); });
    }
    run_jobs(jobs, ctx.workers);
    for (auto& p : parts)
      for (auto& c : p.checks) rep.checks.push_back(std::move(c));
  } else if (a.suite == "concentration") {
    ConcentrationSpec s;
    if (!a.Ts.empty()) s.T = a.Ts.front();
    s.d = a.d;
    s.columns = a.columns;
    s.trials = a.trials;
    s.sphere_trials = a.sphere_trials;
    s.sphere_dims = a.dims;
    s.sphere_c = a.cs;
    s.seed = ctx.seed;
    s.workers = ctx.workers;
    rep = certify_concentration(s);
  } else {
    throw UsageError("unknown suite '" + a.suite + "' (expected kernel, stochastic or concentration)");
  }

  ojson out;
  out["meta"] = meta(ctx, taint);
  const ojson body = rep.to_json();
  for (auto& [k, v] : body.items()) out[k] = v;
  write_text(ctx.out, emit_json(out));
  if (!a.junit.empty()) write_text(a.junit, rep.to_junit());
  write_sidecar(ctx, ctx.out);

  const int inconclusive = rep.count(Outcome::Inconclusive);
  if (rep.failed()) {
    std::cerr << "hardchain: " << rep.count(Outcome::Fail) << " check(s) failed\n";
    return kExitCheckFailed;
  }
  if (inconclusive > 0) std::cerr << "hardchain: warning: " << inconclusive << " check(s) inconclusive\n";
  return kExitOk;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  std::string solver = "chain";
  std::vector<int> Ts;
  std::vector<double> sweep_eps;
  double eps = -1.0;
  double step = 1.0 / constants::kGradientLipschitz;
  long budget = 1000000;
  std::string oracle = "det";
  double prob = 1.0;
  int columns = 0;
  int batch = 1;
  bool exhaustive = false;
  int runs = 1;
  double delta = 3000.0;
  double lp = 1.0;
  std::string instance;
};

int cmd_bench(const Context& ctx, const BenchArgs& a) {
  SolverSpec spec;
  spec.kind = solver_from_string(a.solver);
  spec.step = a.step;
  spec.budget = a.budget;
  spec.oracle = oracle_kind_from_string(a.oracle);
  spec.prob = a.prob;
  spec.columns = a.columns;
  spec.batch = a.batch;
  spec.exhaustive = a.exhaustive;
  spec.seed = ctx.seed;
  spec.eps = a.eps > 0.0 ? a.eps : 0.9;
  if (a.runs < 1) throw UsageError("--runs must be >= 1");
  if (spec.kind == SolverKind::SGD && spec.oracle == OracleKind::DetOrder && a.prob != 1.0)
    throw UsageError("--prob needs --oracle bernoulli");

  std::vector<BenchRecord> rows;
  std::optional<Sweep> sweep;
  std::vector<std::string> taint;
  if (!a.sweep_eps.empty()) {
    ProblemConstants c;
    c.delta = a.delta;
    c.lipschitz = a.lp;
    sweep = sweep_eps(a.sweep_eps, c, spec, ctx.workers);
    rows = sweep->records;
  } else if (!a.instance.empty()) {
    const Instance inst = load_instance(a.instance);
    if (a.eps <= 0.0) spec.eps = 0.9 * inst.params().alpha_over_beta();
    rows.resize(static_cast<std::size_t>(a.runs));
    std::vector<std::function<void()>> jobs;
    for (int r = 0; r < a.runs; ++r)
      jobs.push_back([&, r] {
        SolverSpec s = spec;
        s.seed = ctx.seed + static_cast<std::uint64_t>(r);
        rows[static_cast<std::size_t>(r)] = run_solver(inst, s);
      });
    run_jobs(jobs, ctx.workers);
  } else {
    const std::vector<int> Ts = a.Ts.empty() ? std::vector<int>{10} : a.Ts;
    const int cols = a.columns > 0 ? a.columns : 0;
    rows.resize(Ts.size() * static_cast<std::size_t>(a.runs));
    std::vector<std::function<void()>> jobs;
    for (std::size_t i = 0; i < Ts.size(); ++i)
      for (int r = 0; r < a.runs; ++r)
        jobs.push_back([&, i, r] {
          SolverSpec s = spec;
          s.seed = ctx.seed + static_cast<std::uint64_t>(r);
          const int need = spec.oracle == OracleKind::MeanHiding || spec.oracle == OracleKind::Mss
                               ? (cols > 0 ? cols : Ts[i])
                               : 0;
          rows[i * static_cast<std::size_t>(a.runs) + static_cast<std::size_t>(r)] =
              run_solver(Instance::kernel_units(Ts[i], 1, need), s);
        });
    run_jobs(jobs, ctx.workers);
    if (Ts.size() >= 3 && a.runs == 1) {
      Sweep s;
      s.records = rows;
      s.predictor = Predictor::T;
      s.expected_slope = 1.0;
      s.fit = fit_scaling(rows, Predictor::T);
      sweep = s;
    }
  }
  for (const auto& r : rows)
    for (const auto& t : r.taint)
      if (std::find(taint.begin(), taint.end(), t) == taint.end()) taint.push_back(t);

  std::ostringstream os;
  const ojson m = meta(ctx, taint);
  os << "# hardchain " << HARDCHAIN_VERSION << "\n";
  os << "# meta " << m.dump() << "\n";
  os << csv_header() << "\n";
  for (const auto& r : rows) os << csv_row(r) << "\n";
  bool failed = false;
  for (const auto& r : rows) failed |= !r.success;
  if (sweep) {
    ojson f;
    f["predictor"] = sweep->predictor == Predictor::Eps ? "eps" : "T";
    f["slope"] = sweep->fit.slope;
    f["intercept"] = sweep->fit.intercept;
    f["r2"] = sweep->fit.r2_defined ? ojson(sweep->fit.r2) : ojson(nullptr);
    f["expected_slope"] = sweep->expected_slope;
    os << "# fit " << f.dump() << "\n";
  }
  if (spec.kind == SolverKind::SGD && spec.oracle == OracleKind::Bernoulli) {
    long el = 0, adv = 0;
    for (const auto& r : rows) el += r.eligible_queries, adv += r.advances;
    ojson q;
    q["eligible_queries"] = el;
    q["advances"] = adv;
    q["mean"] = adv > 0 ? ojson(static_cast<double>(el) / static_cast<double>(adv)) : ojson(nullptr);
    q["expected"] = 1.0 / spec.prob;
    os << "# queries_per_advance " << q.dump() << "\n";
  }
  write_text(ctx.out, os.str());
  ojson wall = ojson::array();
  for (const auto& r : rows) wall.push_back(r.wall_seconds);
  ojson extra;
  extra["row_wall_seconds"] = wall;
  write_sidecar(ctx, ctx.out, extra);
  if (failed) std::cerr << "hardchain: warning: some runs exhausted the query budget\n";
  return kExitOk;
}

// ---------------------------------------------------------------- grover

struct GroverArgs {
  double p = 1024.0;
  long trials = 10000;
};

int cmd_grover(const Context& ctx, const GroverArgs& a) {
  if (!(a.p > 0.0)) throw UsageError("--p must be positive");
  // values >= 1 name the register size 1/p
  const double p = a.p >= 1.0 ? 1.0 / a.p : a.p;
  const SpeedupReport rep = speedup_demo(p, a.trials, ctx.seed);
  ojson out;
  out["meta"] = meta(ctx, {});
  const ojson body = rep.to_json();
  for (auto& [k, v] : body.items()) out[k] = v;
  out["closed_form_error"] =
      std::abs(rep.quantum_success - grover_closed_form(rep.N, 1, rep.quantum_queries));
  write_text(ctx.out, emit_json(out));
  write_sidecar(ctx, ctx.out);
  return rep.quantum_success >= 0.5 ? kExitOk : kExitCheckFailed;
}

// ---------------------------------------------------------------- argv

bool has_flag(const std::vector<std::string>& args, const std::string& name) {
  const std::string f = "--" + name;
  for (const auto& a : args)
    if (a == f || a.rfind(f + "=", 0) == 0) return true;
  return false;
}

// Expand a JSON config into flag tokens; explicit command-line flags win.
std::vector<std::string> config_tokens(const ojson& cfg, const std::vector<std::string>& explicit_args) {
  std::vector<std::string> out;
  for (const auto& [key, v] : cfg.items()) {
    if (key == "command" || has_flag(explicit_args, key)) continue;
    auto scalar = [](const ojson& x) -> std::string {
      if (x.is_string()) return x.get<std::string>();
      if (x.is_number_integer() || x.is_number_unsigned()) return x.dump();
      if (x.is_number()) return x.dump();
      throw UsageError("config values must be strings, numbers, booleans or arrays");
    };
    if (v.is_boolean()) {
      if (v.get<bool>()) out.push_back("--" + key);
    } else if (v.is_array()) {
      std::string s;
      for (const auto& e : v) s += (s.empty() ? "" : ",") + scalar(e);
      out.push_back("--" + key);
      out.push_back(s);
    } else {
      out.push_back("--" + key);
      out.push_back(scalar(v));
    }
  }
  return out;
}

std::vector<std::string> canonical_args(int argc, char** argv) {
  std::vector<std::string> raw(argv + 1, argv + argc);
  std::string config_path;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] == "--config") {
      if (i + 1 >= raw.size()) throw UsageError("--config needs a file");
      config_path = raw[++i];
    } else if (raw[i].rfind("--config=", 0) == 0) {
      config_path = raw[i].substr(9);
    } else {
      rest.push_back(raw[i]);
    }
  }
  std::string command;
  std::vector<std::string> tail;
  for (const auto& a : rest) {
    if (command.empty() && kCommands.count(a)) command = a;
    else tail.push_back(a);
  }
  std::vector<std::string> cfg_tokens;
  if (!config_path.empty()) {
    std::ifstream f(config_path);
    if (!f) throw UsageError("cannot read config " + config_path);
    ojson cfg;
    try {
      cfg = ojson::parse(f);
    } catch (const nlohmann::json::exception& e) {
      throw UsageError("malformed config: " + std::string(e.what()));
    }
    if (!cfg.is_object()) throw UsageError("config must be a JSON object");
    if (command.empty() && cfg.contains("command")) command = cfg["command"].get<std::string>();
    cfg_tokens = config_tokens(cfg, tail);
  }
  std::vector<std::string> out;
  if (!command.empty()) out.push_back(command);
  out.insert(out.end(), cfg_tokens.begin(), cfg_tokens.end());
  out.insert(out.end(), tail.begin(), tail.end());
  const bool help = has_flag(out, "help") || std::find(out.begin(), out.end(), "-h") != out.end();
  if (!command.empty() && !help && !has_flag(out, "seed")) {
    const char* env = std::getenv("HARDCHAIN_SEED");
    out.push_back("--seed");
    out.push_back(env && *env ? env : "1");
  }
  return out;
}

void add_common(CLI::App* sub, Context& ctx, const std::string& out_help) {
  sub->add_option("--seed", ctx.seed, "random seed (falls back to HARDCHAIN_SEED, then 1)");
  sub->add_option("--workers", ctx.workers, "parallel jobs")->check(CLI::PositiveNumber);
  sub->add_option("--out", ctx.out, out_help);
}

}  // namespace

int main(int argc, char** argv) {
  Context ctx;
  ctx.workers = default_workers();
  std::vector<std::string> args;
  try {
    args = canonical_args(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "hardchain: " << e.what() << "\n";
    return kExitUsage;
  }
  ctx.argv = {"hardchain"};
  ctx.argv.insert(ctx.argv.end(), args.begin(), args.end());

  CLI::App app{"hard instances, oracles, certification and benchmarks for nonconvex query complexity"};
  app.set_version_flag("--version", HARDCHAIN_VERSION);
  app.require_subcommand(1);
  app.add_option("--config", "JSON file whose keys mirror the flags");

  GenArgs ga;
  auto* gen = app.add_subcommand("gen", "generate an instance: JSON header and binary U payload");
  add_common(gen, ctx, "file prefix (default: instance)");
  gen->add_option("--setting", ga.setting, "det, stoch or mss");
  gen->add_option("--p", ga.p, "derivative order of the deterministic setting");
  gen->add_option("--delta", ga.delta, "initial suboptimality");
  gen->add_option("--lp", ga.lp, "L_p (det) or L (stoch, mss)");
  gen->add_option("--lbar", ga.lbar, "mean-squared smoothness constant (mss)");
  gen->add_option("--sigma", ga.sigma, "noise level");
  gen->add_option("--eps", ga.eps, "target accuracy");
  gen->add_option("--ell", ga.ell, "kernel Lipschitz constant (required for p > 1)");
  gen->add_option("--d", ga.d, "ambient dimension (default: the floor)");
  gen->add_flag("--allow-below-floor", ga.below_floor, "accept d below the floor; taints the instance");
  gen->add_option("--p-max", ga.p_max, "highest derivative order served");
  gen->add_option("--c0", ga.c0, "constant for lower_bound_value");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "evaluate derivatives or stochastic oracles at a point");
  add_common(ev, ctx, "output JSON (default: stdout)");
  ev->add_option("--instance", ea.instance, "instance header JSON")->required();
  ev->add_flag("--at-zero", ea.at_zero, "evaluate at x = 0");
  ev->add_option("--x", ea.x_file, "point: JSON array or whitespace-separated numbers");
  ev->add_option("--order", ea.order, "derivative order (det oracle)");
  ev->add_option("--oracle", ea.oracle, "det, bernoulli, meanhiding or mss");
  ev->add_option("--prob", ea.prob, "Bernoulli probability");
  ev->add_option("--columns", ea.columns, "hidden-column count (default: the instance's)");
  ev->add_flag("--all-j", ea.all_j, "enumerate the whole randomness support");
  ev->add_option("--j", ea.j, "pin the randomness");
  ev->add_option("--samples", ea.samples, "number of independent draws");

  VerifyArgs va;
  auto* ve = app.add_subcommand("verify", "run a certification suite");
  add_common(ve, ctx, "output JSON (default: stdout)");
  ve->add_option("--suite", va.suite, "kernel, stochastic or concentration");
  ve->add_option("--T", va.Ts, "chain length(s)")->delimiter(',');
  ve->add_option("--samples", va.samples, "random points per T (kernel)");
  ve->add_option("--fd-points", va.fd_points, "finite-difference points per T (kernel)");
  ve->add_option("--reference-points", va.reference_points, "quadrature reference points per T (kernel)");
  ve->add_option("--columns", va.columns, "hidden-column count");
  ve->add_option("--d", va.d, "ambient dimension");
  ve->add_option("--oracle", va.oracles, "oracles to certify (stochastic)")->delimiter(',');
  ve->add_option("--points", va.points, "query points (stochastic)");
  ve->add_option("--bernoulli-queries", va.bernoulli_queries, "Bernoulli progress queries");
  ve->add_option("--bernoulli-prob", va.bernoulli_prob, "Bernoulli probability");
  ve->add_option("--mss-pairs", va.mss_pairs, "point pairs for the smoothness ratio");
  ve->add_option("--trials", va.trials, "zero-chain trials per t (concentration)");
  ve->add_option("--sphere-trials", va.sphere_trials, "sphere-tail trials (concentration)");
  ve->add_option("--dims", va.dims, "sphere dimensions")->delimiter(',');
  ve->add_option("--c", va.cs, "sphere tail levels")->delimiter(',');
  ve->add_option("--junit", va.junit, "also write JUnit XML here");

  BenchArgs ba;
  auto* be = app.add_subcommand("bench", "run solvers and fit scaling laws");
  add_common(be, ctx, "output CSV (default: stdout)");
  be->add_option("--solver", ba.solver, "gd, sgd, chain or random");
  be->add_option("--T", ba.Ts, "chain length(s), kernel units")->delimiter(',');
  be->add_option("--sweep-eps", ba.sweep_eps, "deterministic eps sweep through params_for")->delimiter(',');
  be->add_option("--eps", ba.eps, "stopping target (default 0.9 kernel units, 0.9 alpha/beta ambient)");
  be->add_option("--step", ba.step, "step in kernel units");
  be->add_option("--budget", ba.budget, "query budget");
  be->add_option("--oracle", ba.oracle, "oracle for sgd: det, bernoulli, meanhiding or mss");
  be->add_option("--prob", ba.prob, "Bernoulli probability");
  be->add_option("--columns", ba.columns, "hidden-column count");
  be->add_option("--batch", ba.batch, "queries averaged per step");
  be->add_flag("--exhaustive", ba.exhaustive, "average over the whole randomness support");
  be->add_option("--runs", ba.runs, "independent runs per T (seeds seed, seed+1, ...)");
  be->add_option("--delta", ba.delta, "Delta for --sweep-eps");
  be->add_option("--lp", ba.lp, "L for --sweep-eps");
  be->add_option("--instance", ba.instance, "run on a saved (ambient) instance instead");

  GroverArgs gra;
  auto* gr = app.add_subcommand("grover", "amplitude amplification against classical draws");
  add_common(gr, ctx, "output JSON (default: stdout)");
  gr->add_option("--p", gra.p, "revealing probability, or 1/p when >= 1");
  gr->add_option("--trials", gra.trials, "classical trials");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen(ctx, ga);
    if (ev->parsed()) return cmd_eval(ctx, ea);
    if (ve->parsed()) return cmd_verify(ctx, va);
    if (be->parsed()) return cmd_bench(ctx, ba);
    if (gr->parsed()) return cmd_grover(ctx, gra);
  } catch (const InfeasibleParameters& e) {
    std::cerr << "hardchain: infeasible parameters: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const std::invalid_argument& e) {
    std::cerr << "hardchain: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "hardchain: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    std::cerr << "hardchain: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "hardchain: error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
