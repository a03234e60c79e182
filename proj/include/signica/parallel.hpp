#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace signica {

namespace detail {
inline std::size_t& default_thread_cap() {
  static std::size_t cap = 0;  // 0: hardware concurrency
  return cap;
}
inline bool& inside_parallel_region() {
  thread_local bool inside = false;
  return inside;
}
}  // namespace detail

/// Caps the number of worker threads used by parallel loops (0 = hardware concurrency).
inline void set_max_threads(std::size_t n) { detail::default_thread_cap() = n; }

inline std::size_t max_threads() {
  std::size_t cap = detail::default_thread_cap();
  if (cap == 0) cap = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  return cap;
}

/// Runs `body(i)` for every i in [0, n). Each index is visited exactly once and the
/// body must write only to slots owned by that index, so results never depend on
/// the thread count. The first exception thrown by any body is rethrown.
/// Nested calls run serially on the calling worker.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
  const std::size_t workers = detail::inside_parallel_region() ? 1 : std::min(max_threads(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run = [&] {
    detail::inside_parallel_region() = true;
    struct Reset {
      ~Reset() { detail::inside_parallel_region() = false; }
    } reset;
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace signica
