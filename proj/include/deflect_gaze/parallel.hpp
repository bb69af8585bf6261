#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace deflect_gaze {

/// Worker cap: DEFLECT_GAZE_THREADS if set to a positive integer, else the
/// hardware concurrency.
inline unsigned thread_cap() {
  if (const char* env = std::getenv("DEFLECT_GAZE_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace detail {
inline thread_local bool in_parallel_region = false;
}

/// Runs fn(i) for i in [0, n) on up to thread_cap() threads. Nested calls run
/// serially on the calling worker. Callers write to disjoint slots, so
/// results never depend on the thread count.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const unsigned cap = thread_cap();
  if (n == 0) return;
  if (cap <= 1 || n == 1 || detail::in_parallel_region) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(cap, n);
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      detail::in_parallel_region = true;
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace deflect_gaze
