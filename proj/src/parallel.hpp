#pragma once

// Block-parallel loop over [0, n). Work must write only to per-index slots;
// results are then independent of thread count and schedule.

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace hoda::detail {

template <typename Fn>
void parallel_for(int n, Fn&& fn) {
  if (n <= 0) return;
  const unsigned hw = std::thread::hardware_concurrency();
  const int workers = std::max(1, std::min<int>(n, hw ? static_cast<int>(hw) : 4));
  if (workers == 1) {
    fn(0, n);
    return;
  }
  const int chunk = (n + workers - 1) / workers;
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    const int begin = w * chunk;
    const int end = std::min(n, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& t : threads) t.join();
}

}  // namespace hoda::detail
