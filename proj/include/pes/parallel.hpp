// OpenMP-backed index-parallel map with a serial reference path. Work items
// must be independent; results are gathered in index order, so output is
// identical for any thread count (tests compare the two paths bit for bit).
#pragma once

#include <omp.h>

#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <vector>

namespace pes {

inline int& thread_count_ref() {
  static int count = 1;
  return count;
}

inline void set_num_threads(int n) { thread_count_ref() = n < 1 ? 1 : n; }
inline int num_threads() { return thread_count_ref(); }

// Serial reference implementation.
template <typename F>
void serial_for(int begin, int end, F&& body) {
  for (int i = begin; i < end; ++i) body(i);
}

// OpenMP implementation; falls back to the serial loop for one thread.
template <typename F>
void parallel_for(int begin, int end, F&& body) {
  const int threads = num_threads();
  if (threads <= 1 || end - begin <= 1) {
    serial_for(begin, end, body);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (int i = begin; i < end; ++i) {
    try {
      body(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

template <typename T, typename F>
std::vector<T> parallel_map(int count, F&& producer) {
  std::vector<std::optional<T>> slots(count);
  parallel_for(0, count, [&](int i) { slots[i].emplace(producer(i)); });
  std::vector<T> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

template <typename T, typename F>
std::vector<T> serial_map(int count, F&& producer) {
  std::vector<T> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(producer(i));
  return out;
}

}  // namespace pes
