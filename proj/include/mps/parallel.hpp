#pragma once

// Static block partitioning over an index range. Results must be written to
// disjoint, pre-sized slots keyed by index; combined with per-index derived
// RNG streams this makes the thread count unobservable in the output.

#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mps::detail {

template <typename Body>
inline void parallel_for(std::size_t count, unsigned threads, Body&& body) {
  if (count == 0) return;
  std::size_t workers = threads == 0 ? 1 : threads;
  if (workers > count) workers = count;
  if (workers == 1) {
    body(std::size_t{0}, count);
    return;
  }

  const std::size_t chunk = count / workers;
  const std::size_t remainder = count % workers;
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  std::exception_ptr first_error;
  std::mutex error_mutex;

  std::size_t begin = 0;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t len = chunk + (w < remainder ? 1 : 0);
    const std::size_t end = begin + len;
    auto run = [&body, &first_error, &error_mutex](std::size_t b, std::size_t e) {
      try {
        body(b, e);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    };
    if (w + 1 == workers) {
      run(begin, end);
    } else {
      pool.emplace_back(run, begin, end);
    }
    begin = end;
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace mps::detail
