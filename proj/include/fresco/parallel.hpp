#pragma once

// OpenMP is optional. Every parallel loop in the library writes to disjoint
// outputs per iteration, and every reduction is finished serially in index
// order, so results do not depend on the thread count.
#if defined(_OPENMP)
#include <omp.h>
#define FRESCO_PRAGMA_PARALLEL_FOR _Pragma("omp parallel for schedule(static)")
#define FRESCO_PRAGMA_PARALLEL_FOR_DYNAMIC _Pragma("omp parallel for schedule(dynamic)")
#else
#define FRESCO_PRAGMA_PARALLEL_FOR
#define FRESCO_PRAGMA_PARALLEL_FOR_DYNAMIC
#endif

namespace fresco {

inline int max_threads() {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline void set_threads(int n) {
#if defined(_OPENMP)
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

}  // namespace fresco
