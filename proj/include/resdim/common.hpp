#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <string>
#include <vector>

namespace resdim {

// Raised when a size limit configured on an operation would be exceeded.
struct CapExceeded : std::length_error {
  using std::length_error::length_error;
};

// Raised when a linear solve or optimization fails to produce a certified answer.
struct NumericalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shortest round-trip-safe decimal for doubles (17 significant digits).
std::string fmt(double v);

// Least-squares slope of ys against xs. Requires at least two distinct xs.
double ls_slope(const std::vector<double>& xs, const std::vector<double>& ys);

// Runs f(i) for i in [0, count) on a bounded pool. Callers write results into slot i, so
// the outcome does not depend on scheduling. The first exception is rethrown.
template <class F>
void parallel_for(std::size_t count, F&& f, unsigned workers = 0) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace resdim
