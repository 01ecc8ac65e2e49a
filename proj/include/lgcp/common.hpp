// common.hpp -- error types, missing-value convention, small shared utilities.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace lgcp {

// All toolkit errors derive from Error so callers can catch one type.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};
struct DimensionError : Error { using Error::Error; };
struct IndexError : Error { using Error::Error; };
struct ParameterError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct ModelError : Error { using Error::Error; };
struct ConvergenceError : Error { using Error::Error; };
struct InsufficientDataError : Error { using Error::Error; };

// Missing observations and covariate values are carried as NaN.
inline double missing_value() { return std::numeric_limits<double>::quiet_NaN(); }
inline bool is_missing(double v) { return std::isnan(v); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

// Deterministic parallel map: out[i] = fn(i). Each output depends only on its
// index, so the result is independent of thread scheduling. If any fn throws,
// the exception from the lowest failing index is rethrown.
template <typename Fn>
void parallel_for(std::size_t count, int n_threads, Fn&& fn) {
  if (n_threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::size_t workers = std::min<std::size_t>(n_threads, count);
  std::vector<std::exception_ptr> errs(count);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([t, workers, count, &fn, &errs]() {
      for (std::size_t i = t; i < count; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errs[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

inline int default_threads() {
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace lgcp
