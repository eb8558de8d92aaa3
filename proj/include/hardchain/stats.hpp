#pragma once

#include <vector>

namespace hardchain {

/// Two-sided 99% normal quantile.
inline constexpr double kZ99 = 2.5758293035489004;

struct Interval {
  double lo;
  double hi;
};

/// Wilson score interval for a binomial proportion.
Interval wilson(long hits, long n, double z = kZ99);

enum class Outcome { Pass, Fail, Inconclusive, Skipped };
const char* to_string(Outcome o);

/// One-sided verdict for "true frequency <= bound": pass when the whole
/// interval sits at or below the bound, fail when it sits above.
Outcome compare_upper(const Interval& ci, double bound);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  bool r2_defined = false;
};

/// Ordinary least squares y = slope * x + intercept.
LinearFit least_squares(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace hardchain
