#pragma once

#include <algorithm>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace fbgpr {

// Runs fn(i) for i in [0, n) across up to max_threads workers.  Work items
// are assigned by static round-robin so the partition does not depend on
// timing; callers must combine results in index order to stay deterministic.
// The first exception thrown by any worker is rethrown on the calling thread.
inline void parallel_for(int n, const std::function<void(int)>& fn,
                         int max_threads = 0) {
  if (n <= 0) return;
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 1;
  int workers = max_threads > 0 ? std::min(max_threads, hw) : hw;
  workers = std::min(workers, n);

  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }

  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (int i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace fbgpr
