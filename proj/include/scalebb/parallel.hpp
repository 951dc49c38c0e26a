#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace scalebb {

inline int resolve_workers(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs fn(worker_id, item) for every item in [0, n_items) over a small
/// thread pool. Items are claimed from a shared counter; callers own
/// determinism by writing results into per-item slots, so the schedule
/// never shows in the output. Exceptions propagate (first one wins).
inline void parallel_for(std::int64_t n_items, int workers,
                         const std::function<void(int, std::int64_t)>& fn) {
  workers = resolve_workers(workers);
  if (workers <= 1 || n_items <= 1) {
    for (std::int64_t i = 0; i < n_items; ++i) fn(0, i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&](int id) {
    for (;;) {
      const std::int64_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n_items) return;
      try {
        fn(id, i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n_items, std::memory_order_relaxed);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker, w);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace scalebb
