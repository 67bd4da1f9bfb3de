#include "slqr/parallel.hpp"

#include <cmath>
#include <exception>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace slqr {

namespace {

IndexedMax reduce_in_order(const std::vector<double>& values) {
  IndexedMax best{-std::numeric_limits<double>::infinity(), -1};
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (std::isnan(values[i]) && best.index >= 0) continue;
    if (best.index < 0 || std::isnan(best.value) || values[i] > best.value) {
      best = {values[i], static_cast<int>(i)};
    }
  }
  return best;
}

}  // namespace

IndexedMax indexed_max_serial(int count, const std::function<double(int)>& fn) {
  std::vector<double> values(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) values[i] = fn(i);
  return reduce_in_order(values);
}

IndexedMax indexed_max_parallel(int count, const std::function<double(int)>& fn) {
  std::vector<double> values(static_cast<std::size_t>(count));
  for_each_index_parallel(count, [&](int i) { values[i] = fn(i); });
  return reduce_in_order(values);
}

IndexedMax indexed_max(Execution ex, int count, const std::function<double(int)>& fn) {
  return ex == Execution::parallel ? indexed_max_parallel(count, fn)
                                   : indexed_max_serial(count, fn);
}

void for_each_index_serial(int count, const std::function<void(int)>& fn) {
  for (int i = 0; i < count; ++i) fn(i);
}

void for_each_index_parallel(int count, const std::function<void(int)>& fn) {
  // Rethrow the lowest-index failure so error reporting matches the serial path.
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < count; ++i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void for_each_index(Execution ex, int count, const std::function<void(int)>& fn) {
  if (ex == Execution::parallel) {
    for_each_index_parallel(count, fn);
  } else {
    for_each_index_serial(count, fn);
  }
}

int available_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace slqr
