#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace pnr {

/// Worker count: `requested` if positive, otherwise hardware concurrency.
/// The PNR_THREADS environment variable caps the result.
inline unsigned resolve_thread_count(int requested = 0) {
  unsigned n = requested > 0 ? static_cast<unsigned>(requested)
                             : std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("PNR_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return std::max(1u, n);
}

/// Runs fn(begin, end) over disjoint chunks of [0, count). Work item i must
/// depend only on i, and results must be written to slot i; the output is
/// then identical for every worker count.
inline void parallel_chunks(std::size_t count, unsigned threads,
                            const std::function<void(std::size_t, std::size_t)>& fn) {
  if (count == 0) return;
  threads = std::min<unsigned>(std::max(1u, threads), static_cast<unsigned>(count));
  if (threads <= 1) {
    fn(0, count);
    return;
  }
  const std::size_t chunk = (count + threads - 1) / threads;
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned w = 0; w < threads; ++w) {
    const std::size_t begin = static_cast<std::size_t>(w) * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, w, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  // rethrow the error of the lowest chunk so failures are schedule-independent
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace pnr
