#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace boxprob {

/// Worker count from BOXPROB_THREADS, else the hardware concurrency.
inline std::size_t default_thread_count() {
  if (const char* env = std::getenv("BOXPROB_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(task) for every task in [0, n_tasks) on up to `threads` workers.
/// If tasks throw, the exception of the lowest-numbered failing task is
/// rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n_tasks, std::size_t threads, Fn&& fn) {
  threads = std::min(std::max<std::size_t>(threads, 1), n_tasks);
  if (threads <= 1) {
    for (std::size_t t = 0; t < n_tasks; ++t) fn(t);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_task = n_tasks;
  std::exception_ptr failure;
  {
    std::vector<std::jthread> workers;
    workers.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
      workers.emplace_back([&] {
        for (std::size_t t; (t = next.fetch_add(1)) < n_tasks;) {
          try {
            fn(t);
          } catch (...) {
            std::lock_guard lock(mu);
            if (t < failed_task) {
              failed_task = t;
              failure = std::current_exception();
            }
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace boxprob
