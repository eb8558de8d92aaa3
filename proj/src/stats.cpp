#include "hardchain/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace hardchain {

Interval wilson(long hits, long n, double z) {
  if (n <= 0) throw std::invalid_argument("wilson needs n >= 1");
  if (hits < 0 || hits > n) throw std::invalid_argument("wilson needs 0 <= hits <= n");
  const double nn = static_cast<double>(n);
  const double ph = static_cast<double>(hits) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (ph + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(ph * (1.0 - ph) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::Pass: return "pass";
    case Outcome::Fail: return "fail";
    case Outcome::Inconclusive: return "inconclusive";
    case Outcome::Skipped: return "skipped";
  }
  return "fail";
}

Outcome compare_upper(const Interval& ci, double bound) {
  if (ci.hi <= bound) return Outcome::Pass;
  if (ci.lo > bound) return Outcome::Fail;
  return Outcome::Inconclusive;
}

LinearFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("least_squares: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("least_squares needs at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 1e-300)) throw std::invalid_argument("degenerate predictor range");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (syy > 0.0) {
    double sse = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = y[i] - (f.slope * x[i] + f.intercept);
      sse += r * r;
    }
    f.r2 = 1.0 - sse / syy;
    f.r2_defined = true;
  } else {
    f.r2 = std::numeric_limits<double>::quiet_NaN();
  }
  return f;
}

}  // namespace hardchain
