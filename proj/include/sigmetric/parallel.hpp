#pragma once

#include <cstdint>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include "sigmetric/errors.hpp"

namespace sigmetric {

// Worker count for data-parallel loops.  SIGMETRIC_THREADS caps it; the
// default is the hardware concurrency.  Results never depend on the value:
// parallel_for only partitions disjoint output ranges.
inline int worker_count() {
  if (const char* env = std::getenv("SIGMETRIC_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (...) {
      throw ConfigError("SIGMETRIC_THREADS must be a positive integer, got '" +
                        std::string(env) + "'");
    }
    throw ConfigError("SIGMETRIC_THREADS must be a positive integer, got '" +
                      std::string(env) + "'");
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(begin, end) over a partition of [0, n).  Each range is disjoint, so
// the body may write freely to per-index outputs without synchronization.
template <class Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
  if (n <= 0) return;
  const int workers = worker_count();
  if (workers <= 1 || n < 2) {
    fn(std::int64_t{0}, n);
    return;
  }
  const int chunks = static_cast<int>(std::min<std::int64_t>(workers, n));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(chunks));
  const std::int64_t base = n / chunks;
  const std::int64_t extra = n % chunks;
  std::int64_t begin = 0;
  for (int c = 0; c < chunks; ++c) {
    const std::int64_t len = base + (c < extra ? 1 : 0);
    const std::int64_t end = begin + len;
    threads.emplace_back([&fn, begin, end] { fn(begin, end); });
    begin = end;
  }
  for (auto& t : threads) t.join();
}

}  // namespace sigmetric
