#pragma once

#include <cstddef>
#include <functional>

namespace ernet {

/// Worker-thread budget: hardware concurrency, capped by the ERNET_THREADS
/// environment variable when it is set to a positive integer.
std::size_t worker_threads();

/// Override the budget for the current process (0 restores the default).
void set_worker_threads(std::size_t n);

/// Runs fn(lo, hi) over contiguous chunks of [begin, end). Each index is
/// visited by exactly one call, so writes to disjoint outputs stay
/// deterministic regardless of the thread count.
void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t, std::size_t)>& fn,
                  std::size_t min_chunk = 1);

}  // namespace ernet
