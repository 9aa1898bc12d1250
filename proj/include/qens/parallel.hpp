#pragma once

#include <cstddef>
#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace qens {

/// Runs fn(i) for i in [0, count) on up to `workers` threads.
///
/// Index i always lands in the caller's slot i, so any reduction done
/// afterwards in index order is independent of the worker count.
template <class Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const std::size_t nthreads = std::min(workers, count);
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(nthreads);
    for (std::size_t w = 0; w < nthreads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < count; i += nthreads) fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace qens
