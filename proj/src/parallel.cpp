#include "ernet/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace ernet {
namespace {

std::atomic<std::size_t> g_override{0};

std::size_t default_threads() {
  std::size_t n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("ERNET_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap > 0) n = std::min(n, static_cast<std::size_t>(cap));
  }
  return n;
}

}  // namespace

std::size_t worker_threads() {
  const std::size_t o = g_override.load();
  if (o > 0) return o;
  static const std::size_t n = default_threads();
  return n;
}

void set_worker_threads(std::size_t n) { g_override.store(n); }

void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t, std::size_t)>& fn, std::size_t min_chunk) {
  if (end <= begin) return;
  const std::size_t total = end - begin;
  std::size_t threads = std::min(worker_threads(), (total + min_chunk - 1) / std::max<std::size_t>(min_chunk, 1));
  if (threads <= 1) {
    fn(begin, end);
    return;
  }
  const std::size_t chunk = (total + threads - 1) / threads;
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t lo = begin + t * chunk;
    const std::size_t hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, t, lo, hi] {
      try {
        fn(lo, hi);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace ernet
