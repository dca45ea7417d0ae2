#pragma once

#include <cstdlib>
#include <thread>
#include <vector>

namespace rcdens {

//! Worker count: RCDENS_THREADS if set, else hardware concurrency.
inline int worker_count() {
  if (const char* env = std::getenv("RCDENS_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

//! Runs fn(i) for i in [0, n). Each index owns its output slot, so results
//! are independent of the thread count; reductions happen at the call site
//! in index order.
template <typename Fn>
void parallel_for(int n, Fn&& fn) {
  const int workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([t, n, workers, &fn] {
      for (int i = t; i < n; i += workers) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace rcdens
