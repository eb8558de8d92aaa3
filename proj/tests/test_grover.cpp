#include <doctest.h>

#include <cmath>

#include "hardchain/grover.hpp"
#include "hardchain/stats.hpp"

using namespace hardchain;

TEST_CASE("small grover cases") {
  CHECK(grover_run({4, {2}}, 1).success == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(grover_run({16, {3, 9}}, 0).success == doctest::Approx(2.0 / 16));
  CHECK(grover_run({1, {0}}, 1).success == doctest::Approx(1.0));
}

TEST_CASE("simulation matches the closed form") {
  for (long N : {2L, 5L, 64L, 1000L, 4096L})
    for (long m : {1L, 2L, 7L}) {
      if (m > N) continue;
      MarkedOracle o{N, {}};
      for (long i = 0; i < m; ++i) o.marked.push_back((i * 37) % N);
      for (long k : {0L, 1L, 3L, 10L, 51L}) {
        const GroverResult r = grover_run(o, k);
        CHECK(std::abs(r.success - grover_closed_form(N, m, k)) <= 1e-10);
        CHECK(r.max_norm_drift <= 1e-12);
        CHECK(r.oracle_calls == k);
      }
    }
}

TEST_CASE("optimal iteration count at p = 1e-4") {
  const long N = 10000;
  const long k = grover_iterations(N);
  CHECK(k == 79);
  CHECK(grover_run({N, {1234}}, k).success >= 0.5);
}

TEST_CASE("oracle validation") {
  CHECK_THROWS(grover_run({4, {}}, 1));
  CHECK_THROWS(grover_run({4, {4}}, 1));
  CHECK_THROWS(grover_run({4, {1, 1}}, 1));
  CHECK_THROWS(grover_run({kGroverMaxN + 1, {0}}, 1));
  CHECK_THROWS(grover_run({4, {0}}, -1));
}

TEST_CASE("speedup demo") {
  const SpeedupReport r = speedup_demo(1.0 / 1024, 2000, 3);
  CHECK(r.N == 1024);
  CHECK(r.quantum_queries == 26);
  CHECK(r.quantum_success >= 0.5);
  // geometric law: sd of one draw is sqrt(1 - p) / p
  const double se = std::sqrt(1.0 - r.p) / r.p / std::sqrt(2000.0);
  CHECK(std::abs(r.classical_mean - 1024.0) <= 3.0 * se);
  CHECK(r.ratio == doctest::Approx(r.classical_mean / 26));
  const auto j = r.to_json();
  CHECK(j.begin().key() == "p");

  const SpeedupReport one = speedup_demo(1.0, 10, 3);
  CHECK(one.classical_mean == 1.0);
  CHECK(one.quantum_queries == 1);
  CHECK(one.quantum_success == doctest::Approx(1.0));

  CHECK_THROWS(speedup_demo(0.3, 10, 1));
  CHECK_THROWS(speedup_demo(1.0 / (1 << 21), 10, 1));
  CHECK(speedup_demo(1.0 / 1024, 50, 8).classical_mean == speedup_demo(1.0 / 1024, 50, 8).classical_mean);
}

TEST_CASE("quantum queries scale as p^-1/2") {
  std::vector<double> xs, ys;
  for (int e = 6; e <= 14; ++e) {
    xs.push_back(std::log(std::ldexp(1.0, -e)));
    ys.push_back(std::log(static_cast<double>(grover_iterations(1L << e))));
  }
  CHECK(std::abs(least_squares(xs, ys).slope + 0.5) <= 0.05);
}
