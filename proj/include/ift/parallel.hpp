#pragma once

#include <cstdlib>
#include <thread>
#include <vector>

#include "ift/common.hpp"

namespace ift {

// Worker-thread cap from IFT_THREADS; defaults to 1 so results are bitwise
// deterministic regardless of scheduling.
inline int thread_count() {
  static const int n = [] {
    const char* env = std::getenv("IFT_THREADS");
    if (!env) return 1;
    int v = std::atoi(env);
    if (v < 1) v = 1;
    const int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw > 0 && v > hw) v = hw;
    return v;
  }();
  return n;
}

// Splits [0,n) into contiguous chunks, one per worker. Each chunk writes a
// disjoint output range so the result does not depend on the thread count.
template <typename F>
void parallel_for(index_t n, F&& body, index_t grain = 4096) {
  const int threads = thread_count();
  if (threads <= 1 || n < 2 * grain) {
    body(index_t{0}, n);
    return;
  }
  index_t chunks = (n + grain - 1) / grain;
  if (chunks > threads) chunks = threads;
  const index_t step = (n + chunks - 1) / chunks;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(chunks));
  for (index_t c = 0; c < chunks; ++c) {
    const index_t lo = c * step;
    const index_t hi = std::min(n, lo + step);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace ift
