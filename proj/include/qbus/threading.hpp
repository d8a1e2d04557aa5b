#pragma once

#include <cstdint>
#include <functional>

namespace qbus {

// Worker count: explicit set_thread_count() wins, then the QBUS_THREADS
// environment variable, then hardware concurrency.  Always >= 1.
int thread_count();
void set_thread_count(int n);  // n <= 0 restores the default resolution

// Static contiguous split of [0, n) over the workers; fn(begin, end) per
// chunk.  No work stealing, so a chunk's work is a pure function of (n,
// chunk boundaries) — reductions stay deterministic as long as the caller
// accumulates per fixed-size block, not per thread.
void parallel_for(std::int64_t n,
                  const std::function<void(std::int64_t, std::int64_t)>& fn,
                  int threads = 0);

// Fixed-block parallel map + ordered serial combine.  The block structure
// depends only on (n, block), never on the thread count, so floating-point
// sums come out bit-identical for any number of workers.
void blocked_reduce(std::int64_t n, std::int64_t block,
                    const std::function<void(std::int64_t, std::int64_t,
                                             std::int64_t)>& block_fn,
                    const std::function<void(std::int64_t)>& combine,
                    int threads = 0);

}  // namespace qbus
