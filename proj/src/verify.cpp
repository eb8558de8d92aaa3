#include "hardchain/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "hardchain/parallel.hpp"
#include "hardchain/rng.hpp"
#include "hardchain/smoothstep.hpp"

namespace hardchain {

using Eigen::MatrixXd;
using Eigen::VectorXd;

int VerificationReport::count(Outcome o) const {
  return static_cast<int>(std::count_if(checks.begin(), checks.end(),
                                        [o](const CheckResult& c) { return c.outcome == o; }));
}

const CheckResult& VerificationReport::find(const std::string& id) const {
  for (const auto& c : checks)
    if (c.id == id) return c;
  throw std::out_of_range("no check with id " + id);
}

nlohmann::ordered_json VerificationReport::to_json() const {
  nlohmann::ordered_json j;
  j["suite"] = suite;
  j["checks"] = nlohmann::ordered_json::array();
  for (const auto& c : checks) {
    nlohmann::ordered_json e;
    e["id"] = c.id;
    e["property"] = c.property;
    e["outcome"] = to_string(c.outcome);
    e["statistic"] = c.statistic;
    e["bound"] = c.bound;
    e["samples"] = c.samples;
    e["seed"] = c.seed;
    e["taint"] = c.taint;
    e["detail"] = c.detail;
    j["checks"].push_back(e);
  }
  j["summary"] = {{"pass", count(Outcome::Pass)},
                  {"fail", count(Outcome::Fail)},
                  {"inconclusive", count(Outcome::Inconclusive)},
                  {"skipped", count(Outcome::Skipped)}};
  return j;
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string o;
  for (char ch : s) {
    switch (ch) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += ch;
    }
  }
  return o;
}

std::string num(double v) {
  nlohmann::json j = v;
  return j.dump();
}

}  // namespace

std::string VerificationReport::to_junit() const {
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<testsuite name=\"hardchain." << xml_escape(suite) << "\" tests=\"" << checks.size()
     << "\" failures=\"" << count(Outcome::Fail) << "\" skipped=\""
     << count(Outcome::Skipped) + count(Outcome::Inconclusive) << "\">\n";
  for (const auto& c : checks) {
    os << "  <testcase classname=\"" << xml_escape(suite) << "\" name=\"" << xml_escape(c.id) << "\">";
    const std::string msg = c.property + ": statistic " + num(c.statistic) + ", bound " + num(c.bound);
    if (c.outcome == Outcome::Fail)
      os << "<failure message=\"" << xml_escape(msg) << "\"/>";
    else if (c.outcome == Outcome::Inconclusive)
      os << "<skipped message=\"inconclusive: " << xml_escape(msg) << "\"/>";
    else if (c.outcome == Outcome::Skipped)
      os << "<skipped message=\"" << xml_escape(c.detail.value("reason", std::string("skipped"))) << "\"/>";
    os << "</testcase>\n";
  }
  os << "</testsuite>\n";
  return os.str();
}

namespace {

CounterRng check_stream(std::uint64_t seed, const std::string& id) {
  const std::uint64_t tag = fnv1a(id.data(), id.size()) & ((1ULL << 40) - 1);
  return CounterRng(seed, streams::kVerify + tag);
}

double symmetric_uniform(CounterRng& rng, double half) { return (2.0 * rng.uniform() - 1.0) * half; }

// Mixture over the flat region, the transition band and the far field.
VectorXd kernel_point(CounterRng& rng, int T) {
  static constexpr double kHalfWidths[3] = {0.6, 1.5, 3.0};
  VectorXd x(T);
  for (int i = 0; i < T; ++i) {
    const int band = std::min(2, static_cast<int>(rng.uniform() * 3.0));
    x(i) = symmetric_uniform(rng, kHalfWidths[band]);
  }
  return x;
}

std::vector<VectorXd> sample_points(const KernelSuiteSpec& spec, int T, const std::string& id) {
  std::vector<VectorXd> pts;
  for (const auto& p : spec.points)
    if (p.size() == T) pts.push_back(p);
  if (!spec.points.empty()) return pts;
  CounterRng rng = check_stream(spec.seed, id);
  pts.reserve(static_cast<std::size_t>(spec.samples));
  for (long s = 0; s < spec.samples; ++s) pts.push_back(kernel_point(rng, T));
  return pts;
}

double phi_by_quadrature(double x) {
  auto f = [](double t) { return std::exp(-0.5 * t * t); };
  const double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      f, -std::numeric_limits<double>::infinity(), x, 15, 1e-14);
  return std::sqrt(std::exp(1.0)) * v;
}

double psi_direct(double t) {
  if (t <= 0.5) return 0.0;
  const double u = 2.0 * t - 1.0;
  return std::exp(1.0 - 1.0 / (u * u));
}

double fbar_reference(const VectorXd& x) {
  double v = -psi_direct(1.0) * phi_by_quadrature(x(0));
  for (Eigen::Index i = 1; i < x.size(); ++i)
    v += psi_direct(-x(i - 1)) * phi_by_quadrature(-x(i)) - psi_direct(x(i - 1)) * phi_by_quadrature(x(i));
  return v;
}

CheckResult base(const std::string& id, const std::string& property, std::uint64_t seed) {
  CheckResult c;
  c.id = id;
  c.property = property;
  c.seed = seed;
  return c;
}

CheckResult gradient_floor(const KernelSuiteSpec& spec, const ChainKernel& k, const std::string& id) {
  CheckResult c = base(id, "||grad|| > 1 whenever some |x_i| < 1", spec.seed);
  const auto pts = sample_points(spec, k.T(), id);
  double worst = std::numeric_limits<double>::infinity();
  long eligible = 0;
  for (const auto& x : pts) {
    if (x.cwiseAbs().minCoeff() >= 1.0) continue;
    ++eligible;
    worst = std::min(worst, k.gradient(x).norm());
  }
  c.samples = static_cast<long>(pts.size());
  c.bound = 1.0;
  c.detail["eligible"] = eligible;
  if (eligible == 0) {
    c.outcome = Outcome::Skipped;
    c.statistic = 0.0;
    c.detail["reason"] = "no sampled point has a coordinate with |x_i| < 1";
    return c;
  }
  c.statistic = worst;
  c.outcome = worst > 1.0 ? Outcome::Pass : Outcome::Fail;
  return c;
}

CheckResult sup_norm(const KernelSuiteSpec& spec, const ChainKernel& k, const std::string& id) {
  CheckResult c = base(id, "max_i |d_i f| <= 23", spec.seed);
  const auto pts = sample_points(spec, k.T(), id);
  double worst = 0.0;
  for (const auto& x : pts) worst = std::max(worst, k.gradient(x).cwiseAbs().maxCoeff());
  c.samples = static_cast<long>(pts.size());
  c.statistic = worst;
  c.bound = 23.0;
  c.outcome = worst <= 23.0 ? Outcome::Pass : Outcome::Fail;
  return c;
}

CheckResult truncation(const KernelSuiteSpec& spec, const ChainKernel& k, int p, const std::string& id) {
  CheckResult c = base(id, "bundle unchanged by zeroing x_{t+1..T} when ||x_{t..T}|| <= 1/2 (bitwise)", spec.seed);
  const int T = k.T();
  auto pts = sample_points(spec, T, id);
  CounterRng rng = check_stream(spec.seed, id + "/cut");
  long mismatches = 0, eligible = 0;
  for (auto& x : pts) {
    const int t = 1 + std::min(T - 1, static_cast<int>(rng.uniform() * T));
    const double radius = 0.5 * rng.uniform();
    auto tail = x.tail(T - t + 1);
    if (tail.norm() > 0.5) tail *= radius / tail.norm();
    if (tail.norm() > 0.5) continue;
    ++eligible;
    VectorXd cut = x;
    cut.tail(T - t).setZero();
    if (!(k.derivs(x, p) == k.derivs(cut, p))) ++mismatches;
  }
  c.samples = eligible;
  c.statistic = static_cast<double>(mismatches);
  c.bound = 0.0;
  c.detail["order"] = p;
  c.outcome = mismatches == 0 ? Outcome::Pass : Outcome::Fail;
  return c;
}

// dense view of the order-k derivative slice for comparison
double tensor_entry(const KernelDerivs& d, int k, const std::vector<int>& idx) {
  if (k == 1) return d.grad(idx[0]);
  if (k == 2) return d.hess.dense()(idx[0], idx[1]);
  return d.higher[static_cast<std::size_t>(k - 3)].at(idx);
}

CheckResult finite_differences(const KernelSuiteSpec& spec, const ChainKernel& k, int max_order,
                               const std::string& id) {
  CheckResult c = base(id, "analytic D^k matches central differences of D^{k-1}", spec.seed);
  const int T = k.T();
  CounterRng rng = check_stream(spec.seed, id);
  const double h = 2e-4;
  double worst = 0.0;
  std::vector<double> per_order(static_cast<std::size_t>(max_order), 0.0);
  for (int s = 0; s < spec.fd_points; ++s) {
    const VectorXd x = kernel_point(rng, T);
    const KernelDerivs d = k.derivs(x, max_order);
    for (int i = 0; i < T; ++i) {
      // five-point central stencil at offsets -2h, -h, h, 2h
      std::vector<KernelDerivs> st;
      for (double off : {-2.0, -1.0, 1.0, 2.0}) {
        VectorXd xs = x;
        xs(i) += off * h;
        st.push_back(k.derivs(xs, max_order - 1));
      }
      auto stencil = [&](const std::function<double(const KernelDerivs&)>& f) {
        return (f(st[0]) - 8.0 * f(st[1]) + 8.0 * f(st[2]) - f(st[3])) / (12.0 * h);
      };
      for (int ord = 1; ord <= max_order; ++ord) {
        // entries D^k[i, a, b, ...] with the remaining indices in the band around i
        double num_err = 0.0, scale = 1.0;
        const int lo = std::max(0, i - 1), hi = std::min(T - 1, i + 1);
        std::vector<int> rest(static_cast<std::size_t>(ord - 1), lo);
        while (true) {
          std::vector<int> full{i};
          full.insert(full.end(), rest.begin(), rest.end());
          const double an = tensor_entry(d, ord, full);
          double fd;
          if (ord == 1)
            fd = stencil([](const KernelDerivs& e) { return e.value; });
          else
            fd = stencil([&](const KernelDerivs& e) { return tensor_entry(e, ord - 1, rest); });
          num_err = std::max(num_err, std::abs(an - fd));
          scale = std::max(scale, std::abs(an));
          std::size_t pos = 0;
          while (pos < rest.size() && rest[pos] == hi) rest[pos++] = lo;
          if (pos == rest.size()) break;
          ++rest[pos];
        }
        const double rel = num_err / scale;
        per_order[static_cast<std::size_t>(ord - 1)] = std::max(per_order[static_cast<std::size_t>(ord - 1)], rel);
        worst = std::max(worst, rel);
      }
    }
  }
  c.samples = spec.fd_points;
  c.statistic = worst;
  c.bound = spec.fd_tolerance;
  c.detail["max_order"] = max_order;
  c.detail["step"] = h;
  c.detail["worst_by_order"] = per_order;
  c.outcome = worst <= spec.fd_tolerance ? Outcome::Pass : Outcome::Fail;
  return c;
}

CheckResult theta_sandwich(const KernelSuiteSpec& spec, int T, const std::string& id) {
  CheckResult c = base(id, "1{i > prog_1/4} <= Theta_i <= 1{i > prog_1/2}", spec.seed);
  const auto pts = sample_points(spec, T, id);
  long violations = 0;
  for (const auto& x0 : pts) {
    const VectorXd x = x0 / 3.0;  // concentrate mass around the knees at 1/4 and 1/2
    const VectorXd th = theta_all(x, 1.0);
    const int q = prog(x, 0.25), h = prog(x, 0.5);
    for (int i = 1; i <= T; ++i) {
      const double lower = i > q ? 1.0 : 0.0, upper = i > h ? 1.0 : 0.0;
      if (th(i - 1) < lower || th(i - 1) > upper) ++violations;
    }
  }
  c.samples = static_cast<long>(pts.size());
  c.statistic = static_cast<double>(violations);
  c.bound = 0.0;
  c.outcome = violations == 0 ? Outcome::Pass : Outcome::Fail;
  return c;
}

CheckResult reference_values(const KernelSuiteSpec& spec, const ChainKernel& k, const std::string& id) {
  CheckResult c = base(id, "value agrees with a quadrature transcription of the chain", spec.seed);
  CounterRng rng = check_stream(spec.seed, id);
  double worst = 0.0;
  for (int s = 0; s < spec.reference_points; ++s) {
    const VectorXd x = kernel_point(rng, k.T());
    const double ref = fbar_reference(x);
    worst = std::max(worst, std::abs(k.value(x) - ref) / std::max(1.0, std::abs(ref)));
  }
  c.samples = spec.reference_points;
  c.statistic = worst;
  c.bound = 1e-10;
  c.outcome = worst <= 1e-10 ? Outcome::Pass : Outcome::Fail;
  return c;
}

CheckResult boundedness(const KernelSuiteSpec& spec, const ChainKernel& k, const std::string& id) {
  CheckResult c = base(id, "f(0) - min over descent iterates <= 12 T", spec.seed);
  const int T = k.T();
  VectorXd x = VectorXd::Zero(T);
  const double f0 = k.value(x);
  double lowest = f0;
  long iters = 0;
  const long budget = 400L * T;
  for (; iters < budget; ++iters) {
    const KernelDerivs d = k.derivs(x, 1);
    lowest = std::min(lowest, d.value);
    if (d.grad.norm() <= 0.5) break;
    x -= d.grad / 152.0;
  }
  c.samples = iters + 1;
  c.statistic = f0 - lowest;
  c.bound = 12.0 * T;
  c.detail["final_prog"] = prog(x, 1.0);
  c.outcome = c.statistic <= c.bound ? Outcome::Pass : Outcome::Fail;
  return c;
}

}  // namespace

VerificationReport certify_kernel(const KernelSuiteSpec& spec) {
  VerificationReport rep;
  rep.suite = "kernel";
  const int p = std::min(3, std::max(1, spec.fd_max_order));
  std::vector<std::function<CheckResult()>> makers;
  for (int T : spec.Ts) {
    if (T < 1) throw std::invalid_argument("kernel suite needs T >= 1");
    auto kernel = std::make_shared<ChainKernel>(KernelParams{T, 3}, spec.hooks);
    const std::string pre = "kernel.T" + std::to_string(T) + ".";
    makers.push_back([=, &spec] { return gradient_floor(spec, *kernel, pre + "gradient_floor"); });
    makers.push_back([=, &spec] { return sup_norm(spec, *kernel, pre + "sup_norm"); });
    makers.push_back([=, &spec] { return truncation(spec, *kernel, p, pre + "truncation"); });
    makers.push_back([=, &spec] { return finite_differences(spec, *kernel, p, pre + "finite_difference"); });
    makers.push_back([=, &spec] { return theta_sandwich(spec, T, pre + "theta_sandwich"); });
    makers.push_back([=, &spec] { return reference_values(spec, *kernel, pre + "reference_value"); });
    makers.push_back([=, &spec] { return boundedness(spec, *kernel, pre + "boundedness"); });
  }
  rep.checks.resize(makers.size());
  std::vector<std::function<void()>> jobs;
  for (std::size_t i = 0; i < makers.size(); ++i)
    jobs.push_back([&, i] { rep.checks[i] = makers[i](); });
  run_jobs(jobs, spec.workers);
  return rep;
}

namespace {

double power_iteration(const Tridiagonal& m, CounterRng& rng) {
  VectorXd v(m.diag.size());
  for (auto& e : v) e = rng.normal();
  if (v.norm() == 0.0) return 0.0;
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < 500; ++it) {
    VectorXd w = m.multiply(v);
    const double n = w.norm();
    if (n == 0.0) return 0.0;
    w /= n;
    if (std::abs(n - lambda) <= 1e-13 * n) {
      lambda = n;
      break;
    }
    lambda = n;
    v = w;
  }
  return lambda;
}

}  // namespace

LipschitzEstimate estimate_lipschitz(int k, int T, long samples, std::uint64_t seed) {
  if (k < 0) throw std::invalid_argument("order must be >= 0");
  if (samples < 1) throw std::invalid_argument("samples must be >= 1");
  const ChainKernel kern({T, k});
  LipschitzEstimate out;
  out.order = k;
  out.T = T;
  out.samples = samples;
  out.norm = k == 0 ? "abs" : k == 1 ? "euclidean" : k == 2 ? "operator" : "flattened-frobenius";
  for (long s = 0; s < samples; ++s) {
    CounterRng rng(seed, streams::kVerify + (1ULL << 40) - 1 - static_cast<std::uint64_t>(s));
    const VectorXd x = kernel_point(rng, T);
    VectorXd dir(T);
    for (auto& e : dir) e = rng.normal();
    dir.normalize();
    const double r = std::pow(10.0, -3.0 + 2.5 * rng.uniform());
    const VectorXd y = x + r * dir;
    const KernelDerivs a = kern.derivs(x, k), b = kern.derivs(y, k);
    const double dist = (x - y).norm();
    double diff = 0.0;
    if (k == 0) {
      diff = std::abs(a.value - b.value);
    } else if (k == 1) {
      diff = (a.grad - b.grad).norm();
    } else if (k == 2) {
      Tridiagonal m{a.hess.diag - b.hess.diag, a.hess.off - b.hess.off};
      diff = power_iteration(m, rng);
    } else {
      SparseSymTensor t = a.higher.back();
      for (auto& [key, v] : t.entries) v -= b.higher.back().at(key);
      diff = t.flattened_norm();
    }
    out.estimate = std::max(out.estimate, diff / dist);
  }
  return out;
}

InstanceParams stochastic_test_params(int T, int columns, double eps, double L) {
  const double ell = constants::kGradientLipschitz;
  ProblemConstants c;
  c.eps = eps;
  c.lipschitz = L;
  // value branch: T = Delta L / (48 ell eps^2); variance branch kept slack
  c.delta = T * 48.0 * ell * eps * eps / L;
  c.sigma = 4.0 * constants::kGradientBound * eps * std::sqrt(4.0 * T + 4.0);
  InstanceParams p = params_for(Setting::Stochastic, c);
  p.columns = columns;
  return p;
}

namespace {

VectorXd stochastic_point(CounterRng& rng, int T) {
  // prog level uniform in [0, T]; later coordinates straddle both thresholds
  const int t = std::min(T, static_cast<int>(rng.uniform() * (T + 1)));
  VectorXd y(T);
  for (int i = 0; i < T; ++i) {
    const double mag = i < t ? 0.25 + 1.75 * rng.uniform() : 0.3 * rng.uniform();
    y(i) = rng.uniform() < 0.5 ? -mag : mag;
  }
  if (t < T && rng.uniform() < 0.5) y(t) = (rng.uniform() < 0.5 ? -1 : 1) * (0.2 + 0.6 * rng.uniform());
  return y;
}

std::string kind_prefix(OracleKind k) { return to_string(k) + "."; }

}  // namespace

VerificationReport certify_stochastic(const Instance& inst, OracleKind kind, const StochasticSpec& spec) {
  VerificationReport rep;
  rep.suite = "stochastic";
  const auto& P = inst.params();
  const int T = inst.T();
  const double ab = P.alpha / P.beta;
  const double gamma = constants::kGradientBound;
  const StochasticOracle oracle(inst, kind, spec.bernoulli_prob);
  const std::string pre = kind_prefix(kind);
  CounterRng rng = check_stream(spec.seed, pre + "points");

  CheckResult mean = base(pre + "exact_mean", "finite-support mean equals the gradient", spec.seed);
  CheckResult var = base(pre + "exact_variance", "finite-support variance within budget", spec.seed);
  CheckResult chain = base(pre + "zero_chain", "no response reaches beyond prog_1/4 + 1", spec.seed);
  double worst_mean = 0.0, worst_var = 0.0;
  long violations = 0;
  for (int s = 0; s < spec.points; ++s) {
    const VectorXd x = inst.ambient_from_chain(stochastic_point(rng, T));
    QueryLedger ledger(spec.seed);
    const auto all = oracle.query_all(x, ledger);
    const VectorXd grad = inst.tilde_gradient(x);
    VectorXd m = VectorXd::Zero(inst.d());
    double v = 0.0;
    for (std::size_t j = 0; j < all.size(); ++j) {
      const double w = oracle.weight(static_cast<long>(j));
      m += w * all[j].g;
      v += w * (all[j].g - grad).squaredNorm();
    }
    worst_mean = std::max(worst_mean, (m - grad).norm());
    worst_var = std::max(worst_var, v);
    for (const auto& r : ledger.trace())
      if (r.prog_after > r.prog_before + 1) ++violations;
  }
  mean.samples = var.samples = chain.samples = spec.points;
  mean.statistic = worst_mean;
  mean.bound = 1e-10;
  mean.outcome = worst_mean <= 1e-10 ? Outcome::Pass : Outcome::Fail;
  var.statistic = worst_var;
  if (kind == OracleKind::Bernoulli) {
    const double p = spec.bernoulli_prob;
    var.bound = (1.0 - p) / p * ab * ab * gamma * gamma;
    var.property = "finite-support variance <= (1-p)/p (23 alpha/beta)^2";
  } else {
    var.bound = 4.0 * oracle.columns() * ab * ab * gamma * gamma;
    var.property = "finite-support variance <= 4 T' alpha^2 23^2 / beta^2";
  }
  var.detail["sigma_squared"] = P.sigma * P.sigma;
  var.detail["columns"] = oracle.columns();
  var.outcome = worst_var <= var.bound ? Outcome::Pass : Outcome::Fail;
  chain.statistic = static_cast<double>(violations);
  chain.bound = 0.0;
  chain.outcome = violations == 0 ? Outcome::Pass : Outcome::Fail;
  rep.checks.push_back(mean);
  rep.checks.push_back(var);
  rep.checks.push_back(chain);

  if (kind == OracleKind::Bernoulli) {
    CheckResult pr = base(pre + "progress", "frequency of a revealed next component within 3 sigma of p", spec.seed);
    const int t = spec.bernoulli_level >= 0 ? spec.bernoulli_level : T / 2;
    if (t >= T) throw std::invalid_argument("Bernoulli progress level must be < T");
    VectorXd y = VectorXd::Zero(T);
    y.head(t).setOnes();
    const VectorXd x = inst.ambient_from_chain(y);
    QueryLedger ledger(spec.seed, false);
    long revealed = 0, beyond = 0;
    for (long q = 0; q < spec.bernoulli_queries; ++q) {
      const auto r = oracle.query(x, ledger);
      const int reach = prog(r.chain, 0.0);
      if (reach == t + 1) ++revealed;
      if (reach > t + 1) ++beyond;
    }
    const double n = static_cast<double>(spec.bernoulli_queries);
    const double p = spec.bernoulli_prob;
    const double freq = revealed / n;
    const double band = 3.0 * std::sqrt(p * (1.0 - p) / n);
    pr.samples = spec.bernoulli_queries;
    pr.statistic = std::abs(freq - p);
    pr.bound = band;
    pr.detail["level"] = t;
    pr.detail["revealed"] = revealed;
    pr.detail["frequency"] = freq;
    pr.detail["beyond_next"] = beyond;
    pr.detail["queries_counted"] = ledger.total();
    pr.outcome = (pr.statistic <= band && beyond == 0) ? Outcome::Pass : Outcome::Fail;
    rep.checks.push_back(pr);
  }

  if (kind == OracleKind::Mss) {
    CheckResult ms = base(pre + "mean_squared_smoothness",
                          "E_j ||g(x,j) - g(y,j)||^2 / ||x - y||^2 <= 328^2 T' alpha^2 / beta^4", spec.seed);
    CounterRng prng = check_stream(spec.seed, pre + "pairs");
    double worst = 0.0;
    long mismatched = 0;
    for (int s = 0; s < spec.mss_pairs; ++s) {
      const VectorXd y0 = stochastic_point(prng, T);
      VectorXd dir(T);
      for (auto& e : dir) e = prng.normal();
      dir.normalize();
      const double r = std::pow(10.0, -3.0 + 2.0 * prng.uniform());
      const VectorXd x = inst.ambient_from_chain(y0);
      const VectorXd z = inst.ambient_from_chain(y0 + r * dir);
      QueryLedger lx(spec.seed), lz(spec.seed);
      const auto gx = oracle.query_all(x, lx), gz = oracle.query_all(z, lz);
      double acc = 0.0;
      for (std::size_t j = 0; j < gx.size(); ++j) {
        acc += (gx[j].g - gz[j].g).squaredNorm() / static_cast<double>(gx.size());
        mismatched += gx[j].level_mismatch;
      }
      worst = std::max(worst, acc / (x - z).squaredNorm());
    }
    ms.samples = spec.mss_pairs;
    ms.statistic = worst;
    // ambient ratio: g scales as alpha/beta and ||x - y|| as beta, so the
    // kernel-unit constant 328^2 T' becomes 328^2 T' alpha^2 / beta^4
    const double l2 = constants::kMssLipschitz * constants::kMssLipschitz * oracle.columns();
    ms.bound = l2 * P.alpha * P.alpha / std::pow(P.beta, 4);
    ms.detail["bound_alpha2_over_beta2"] = l2 * ab * ab;
    ms.detail["kernel_units_ratio"] = worst * std::pow(P.beta, 4) / (P.alpha * P.alpha);
    ms.detail["level_mismatch_queries"] = mismatched;
    ms.outcome = worst <= ms.bound ? Outcome::Pass : Outcome::Fail;
    rep.checks.push_back(ms);
  }

  for (auto& c : rep.checks) c.taint = inst.taint();
  return rep;
}

namespace {

bool bundles_agree(const KernelDerivs& full, const KernelDerivs& part) {
  const auto t = part.grad.size();
  if (full.value != part.value) return false;
  if (full.order >= 1) {
    if (full.grad.head(t) != part.grad) return false;
    if (!full.grad.tail(full.grad.size() - t).isZero(0.0)) return false;
  }
  if (full.order >= 2) {
    if (full.hess.diag.head(t) != part.hess.diag) return false;
    if (!full.hess.diag.tail(full.hess.diag.size() - t).isZero(0.0)) return false;
    for (Eigen::Index i = 0; i < full.hess.off.size(); ++i) {
      const double want = i < part.hess.off.size() ? part.hess.off(i) : 0.0;
      if (full.hess.off(i) != want) return false;
    }
  }
  for (std::size_t k = 0; k < full.higher.size(); ++k)
    for (const auto& [key, v] : full.higher[k].entries)
      if (v != part.higher[k].at(key)) return false;
  return true;
}

// Chain coordinates y = U^T x of a fixed x when u^(1..m) are fixed and the
// remaining columns are a uniform orthonormal completion. For i > m,
// (y_{m+1}, ..., y_T) = r * g / sqrt(|g|^2 + chi^2_{d - T}), with r the norm of
// x off the fixed prefix and g standard normal: the leading coordinates of a
// uniform unit vector in the (d - m)-dimensional complement.
struct Completion {
  VectorXd prefix;  // fixed coordinates
  double residual;
  long d;
  int T;

  VectorXd draw(CounterRng& rng) const {
    const int m = static_cast<int>(prefix.size());
    const int free = T - m;
    VectorXd y(T);
    y.head(m) = prefix;
    if (free == 0) return y;
    VectorXd g(free);
    for (auto& e : g) e = rng.normal();
    double rest = 0.0;
    if (d - T > 0) rest = std::chi_squared_distribution<double>(static_cast<double>(d - T))(rng);
    y.tail(free) = residual * g / std::sqrt(g.squaredNorm() + rest);
    return y;
  }
};

nlohmann::ordered_json ci_json(long hits, long n, const Interval& ci) {
  return {{"hits", hits}, {"trials", n}, {"ci_lo", ci.lo}, {"ci_hi", ci.hi}};
}

Outcome worst_of(Outcome a, Outcome b) {
  auto rank = [](Outcome o) {
    switch (o) {
      case Outcome::Fail: return 3;
      case Outcome::Inconclusive: return 2;
      case Outcome::Pass: return 1;
      case Outcome::Skipped: return 0;
    }
    return 3;
  };
  return rank(a) >= rank(b) ? a : b;
}

}  // namespace

VerificationReport certify_concentration(const ConcentrationSpec& spec) {
  if (spec.trials < 1000 || spec.sphere_trials < 1000)
    throw std::invalid_argument("concentration checks need at least 1000 trials");
  VerificationReport rep;
  rep.suite = "concentration";
  std::vector<std::function<CheckResult()>> makers;

  for (long d : spec.sphere_dims) {
    for (double c : spec.sphere_c) {
      std::ostringstream id;
      id << "sphere.d" << d << ".c" << c;
      const std::string sid = id.str();
      makers.push_back([=, &spec] {
        CheckResult r = base(sid, "Pr(|<x,u>| >= c) <= 2 exp(-d c^2 / 2)", spec.seed);
        CounterRng rng = check_stream(spec.seed, sid);
        std::chi_squared_distribution<double> chi(static_cast<double>(d - 1));
        long hits = 0;
        for (long s = 0; s < spec.sphere_trials; ++s) {
          const double g = rng.normal();
          const double u1 = std::abs(g) / std::sqrt(g * g + chi(rng));
          hits += u1 >= c;
        }
        const double bound = 2.0 * std::exp(-static_cast<double>(d) * c * c / 2.0);
        const Interval ci = wilson(hits, spec.sphere_trials);
        r.samples = spec.sphere_trials;
        r.statistic = ci.hi;
        r.bound = bound;
        r.detail = ci_json(hits, spec.sphere_trials, ci);
        r.outcome = compare_upper(ci, bound);
        return r;
      });
    }
  }

  const int T = spec.T;
  const double logT = std::log(static_cast<double>(T));
  const long d = spec.d > 0 ? spec.d : static_cast<long>(std::ceil(200.0 * T * logT));
  const double T4 = std::pow(static_cast<double>(T), 4), T6 = std::pow(static_cast<double>(T), 6);

  // fixed x of norm sqrt(T) (kernel units, inside B(0, 2 sqrt T)) and a fixed prefix
  auto completions = [&](std::uint64_t salt) {
    const RotationEmbedding base_u = sample_haar(std::max<long>(d, T), T, spec.seed ^ salt);
    CounterRng rng(spec.seed ^ salt, streams::kVerify + 7);
    VectorXd x(std::max<long>(d, T));
    for (auto& e : x) e = rng.normal();
    x *= std::sqrt(static_cast<double>(T)) / x.norm();
    const VectorXd a = base_u.U.transpose() * x;
    std::vector<Completion> out;
    for (int m = 0; m < T; ++m) {
      const double res2 = std::max(0.0, x.squaredNorm() - a.head(m).squaredNorm());
      out.push_back({a.head(m), std::sqrt(res2), d, T});
    }
    return out;
  };

  struct Tail {
    std::string name;
    double floor;
    double bound;
  };
  std::vector<Tail> tails{{"floor200", 200.0 * T * logT, 1.0 / (144.0 * T4)},
                          {"floor400", 400.0 * T * logT, 1.0 / (144.0 * T6)}};
  if (spec.columns > 0) {
    const double C = spec.columns;
    tails.push_back({"floor400_columns", 400.0 * C * T * std::log(C), 1.0 / (144.0 * C * C * T4)});
  }

  for (const auto& tail : tails) {
    const std::string zid = "zero_chain." + tail.name;
    makers.push_back([=, &spec, &completions] {
      CheckResult r = base(zid, "Pr(bundle of f_T differs from f_t) <= tail, every t", spec.seed);
      r.bound = tail.bound;
      r.detail["d"] = d;
      r.detail["T"] = T;
      r.detail["d_floor"] = tail.floor;
      if (static_cast<double>(d) < tail.floor) {
        r.outcome = Outcome::Skipped;
        r.detail["reason"] = "d below the dimension floor; the tail is not claimed there";
        return r;
      }
      const auto comp = completions(0x51);
      const ChainKernel full({T, spec.order});
      r.outcome = Outcome::Skipped;
      nlohmann::ordered_json per_t = nlohmann::ordered_json::array();
      for (int t = 1; t <= T; ++t) {
        const ChainKernel part({t, spec.order});
        CounterRng rng = check_stream(spec.seed, zid + ".t" + std::to_string(t));
        long hits = 0;
        for (long s = 0; s < spec.trials; ++s) {
          const VectorXd y = comp[static_cast<std::size_t>(t - 1)].draw(rng);
          if (!bundles_agree(full.derivs(y, spec.order), part.derivs(y.head(t), spec.order))) ++hits;
        }
        const Interval ci = wilson(hits, spec.trials);
        auto e = ci_json(hits, spec.trials, ci);
        e["t"] = t;
        per_t.push_back(e);
        r.statistic = std::max(r.statistic, ci.hi);
        r.outcome = worst_of(r.outcome, compare_upper(ci, tail.bound));
      }
      r.samples = spec.trials;
      r.detail["per_t"] = per_t;
      return r;
    });
  }

  {
    const std::string gid = "cannot_guess.floor200";
    makers.push_back([=, &spec, &completions] {
      CheckResult r = base(gid, "Pr(||grad f(x)|| <= alpha/beta) <= 1/(144 T^4), every prefix k < T", spec.seed);
      r.bound = 1.0 / (144.0 * T4);
      r.detail["d"] = d;
      r.detail["T"] = T;
      if (static_cast<double>(d) < 200.0 * T * logT || T < 2) {
        r.outcome = Outcome::Skipped;
        r.detail["reason"] = T < 2 ? "no prefix k < T" : "d below the dimension floor; the tail is not claimed there";
        return r;
      }
      const auto comp = completions(0x77);
      const ChainKernel full({T, 1});
      r.outcome = Outcome::Skipped;
      nlohmann::ordered_json per_k = nlohmann::ordered_json::array();
      for (int k = 1; k < T; ++k) {
        CounterRng rng = check_stream(spec.seed, gid + ".k" + std::to_string(k));
        long hits = 0;
        for (long s = 0; s < spec.trials; ++s)
          if (full.gradient(comp[static_cast<std::size_t>(k)].draw(rng)).norm() <= 1.0) ++hits;
        const Interval ci = wilson(hits, spec.trials);
        auto e = ci_json(hits, spec.trials, ci);
        e["k"] = k;
        per_k.push_back(e);
        r.statistic = std::max(r.statistic, ci.hi);
        r.outcome = worst_of(r.outcome, compare_upper(ci, r.bound));
      }
      r.samples = spec.trials;
      r.detail["per_k"] = per_k;
      return r;
    });
  }

  rep.checks.resize(makers.size());
  std::vector<std::function<void()>> jobs;
  for (std::size_t i = 0; i < makers.size(); ++i)
    jobs.push_back([&, i] { rep.checks[i] = makers[i](); });
  run_jobs(jobs, spec.workers);
  return rep;
}

}  // namespace hardchain
