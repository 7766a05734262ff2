#pragma once

#include <cstddef>
#include <exception>
#include <utility>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ringflow::par {

inline bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline double wall_time() {
#ifdef _OPENMP
  return omp_get_wtime();
#else
  return 0.0;
#endif
}

// Runs fn(i) for every i in [0, n). With parallel=true the iterations are
// distributed over OpenMP threads. Iterations must write only to disjoint,
// preallocated slots so scheduling cannot change the result; every kernel
// built on this has a serial path (parallel=false) that tests compare
// against bit-for-bit.
template <class F>
void for_each_index(std::size_t n, bool parallel, F&& fn) {
#ifdef _OPENMP
  if (parallel && n > 1) {
    std::exception_ptr err = nullptr;
#pragma omp parallel for schedule(dynamic)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
      try {
        fn(static_cast<std::size_t>(i));
      } catch (...) {
#pragma omp critical(ringflow_par_err)
        if (!err) err = std::current_exception();
      }
    }
    if (err) std::rethrow_exception(err);
    return;
  }
#else
  (void)parallel;
#endif
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

}  // namespace ringflow::par
