#include "qbus/threading.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace qbus {
namespace {

std::atomic<int> g_threads{0};

int resolve_default() {
  if (const char* env = std::getenv("QBUS_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc ? static_cast<int>(hc) : 1;
}

}  // namespace

int thread_count() {
  int n = g_threads.load();
  return n > 0 ? n : resolve_default();
}

void set_thread_count(int n) { g_threads.store(n > 0 ? n : 0); }

void parallel_for(std::int64_t n,
                  const std::function<void(std::int64_t, std::int64_t)>& fn,
                  int threads) {
  if (n <= 0) return;
  int t = threads > 0 ? threads : thread_count();
  t = static_cast<int>(std::min<std::int64_t>(t, n));
  if (t <= 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(t);
  std::int64_t chunk = (n + t - 1) / t;
  for (int i = 0; i < t; ++i) {
    std::int64_t b = i * chunk;
    std::int64_t e = std::min<std::int64_t>(b + chunk, n);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  for (auto& th : pool) th.join();
}

void blocked_reduce(std::int64_t n, std::int64_t block,
                    const std::function<void(std::int64_t, std::int64_t,
                                             std::int64_t)>& block_fn,
                    const std::function<void(std::int64_t)>& combine,
                    int threads) {
  if (n <= 0) return;
  if (block < 1) block = 1;
  std::int64_t nblocks = (n + block - 1) / block;
  parallel_for(
      nblocks,
      [&](std::int64_t bb, std::int64_t be) {
        for (std::int64_t b = bb; b < be; ++b) {
          std::int64_t lo = b * block;
          std::int64_t hi = std::min<std::int64_t>(lo + block, n);
          block_fn(b, lo, hi);
        }
      },
      threads);
  for (std::int64_t b = 0; b < nblocks; ++b) combine(b);
}

}  // namespace qbus
