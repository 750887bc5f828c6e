#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace gflow {

// Chunked parallel loop over [0, n). Each index is processed exactly once and
// any reductions happen inside fn in a per-index fixed order, so results are
// bitwise independent of the thread count.
inline void parallel_for(int n, int threads, const std::function<void(int, int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(std::size_t(threads));
  const int chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int b = t * chunk;
    const int e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back(fn, b, e);
  }
  for (auto& th : pool) th.join();
}

} // namespace gflow
