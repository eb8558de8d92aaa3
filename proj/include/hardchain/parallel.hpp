#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace hardchain {

inline int default_workers() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

/// Run jobs[i]() for every i on up to `workers` threads. Results are written by
/// the jobs themselves, so the outcome never depends on scheduling.
inline void run_jobs(const std::vector<std::function<void()>>& jobs, int workers) {
  if (workers <= 1 || jobs.size() <= 1) {
    for (const auto& j : jobs) j();
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  auto loop = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        jobs[i]();
      } catch (...) {
        if (!failed.exchange(true)) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const int n = std::min<int>(workers, static_cast<int>(jobs.size()));
  for (int t = 0; t < n; ++t) pool.emplace_back(loop);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace hardchain
