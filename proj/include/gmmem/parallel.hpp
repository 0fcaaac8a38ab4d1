#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace gmmem {

/// Worker cap from GMM_EM_THREADS (unset or 0 means hardware concurrency).
inline std::size_t worker_count() {
  std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("GMM_EM_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && v > 0) return static_cast<std::size_t>(v);
  }
  return hw;
}

namespace detail {
inline thread_local bool in_parallel_region = false;
}

/// Calls fn(begin, end) over contiguous chunks of [0, n). Chunks are disjoint
/// so results written per index do not depend on the worker count. Nested
/// calls run inline on the calling worker. The first exception is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t min_chunk, Fn&& fn) {
  const std::size_t workers =
      detail::in_parallel_region ? 1 : std::min(worker_count(), std::max<std::size_t>(1, n / std::max<std::size_t>(1, min_chunk)));
  if (workers <= 1 || n == 0) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  threads.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = std::min(n, w * chunk);
    const std::size_t end = std::min(n, begin + chunk);
    threads.emplace_back([&, w, begin, end] {
      detail::in_parallel_region = true;
      try {
        fn(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace gmmem
