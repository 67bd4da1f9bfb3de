#pragma once

// Index-parallel kernels with a serial reference implementation of each.
// Parallel variants evaluate into per-index slots and reduce in index order,
// so both variants return bit-identical results.

#include <functional>
#include <vector>

namespace slqr {

enum class Execution { serial, parallel };

struct IndexedMax {
  double value;
  int index;  // lowest index attaining the max; -1 when the range is empty
};

// max_i fn(i) over [0, count); NaN values lose to any number.
IndexedMax indexed_max_serial(int count, const std::function<double(int)>& fn);
IndexedMax indexed_max_parallel(int count, const std::function<double(int)>& fn);
IndexedMax indexed_max(Execution ex, int count, const std::function<double(int)>& fn);

// out[i] = fn(i). For independent tasks such as trials or leave-one-out solves.
void for_each_index_serial(int count, const std::function<void(int)>& fn);
void for_each_index_parallel(int count, const std::function<void(int)>& fn);
void for_each_index(Execution ex, int count, const std::function<void(int)>& fn);

template <class T>
std::vector<T> map_indices(Execution ex, int count, const std::function<T(int)>& fn) {
  std::vector<T> out(static_cast<std::size_t>(count));
  for_each_index(ex, count, [&](int i) { out[static_cast<std::size_t>(i)] = fn(i); });
  return out;
}

// Number of OpenMP threads available (1 when built without OpenMP).
int available_threads();

}  // namespace slqr
