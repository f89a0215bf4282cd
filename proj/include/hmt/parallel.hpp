#pragma once

// Deterministic data-parallel loop. Work items write only to slots they own,
// so the result is identical for any worker count; reductions happen outside,
// in index order.

#include <atomic>
#include <cstdlib>
#include <thread>
#include <utility>
#include <vector>

namespace hmt {

/// Worker budget for parallel loops. The HMT_THREADS environment variable
/// caps it; 0 or unset means one worker per hardware thread.
inline int thread_budget() {
  int budget = 1;
  unsigned hw = std::thread::hardware_concurrency();
  if (hw > 0) budget = static_cast<int>(hw);
  if (const char* env = std::getenv("HMT_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) budget = static_cast<int>(v);
  }
  return budget;
}

/// Runs fn(i) for every i in [0, n). fn must not throw and must only write
/// to state owned by item i.
template <class F>
void parallel_for(int n, F&& fn) {
  if (n <= 0) return;
  const int workers = std::min(thread_budget(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int grain = std::max(1, n / (workers * 8));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (;;) {
      const int begin = next.fetch_add(grain, std::memory_order_relaxed);
      if (begin >= n) return;
      const int end = std::min(n, begin + grain);
      for (int i = begin; i < end; ++i) fn(i);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (int t = 1; t < workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

}  // namespace hmt
