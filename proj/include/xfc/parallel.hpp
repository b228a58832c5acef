#pragma once

#include <cstddef>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace xfc {

// Worker-count control for the data-parallel stages. Results never depend on
// the value; it only bounds how many threads run.
inline void set_thread_count(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

inline int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// --threads, then XFC_THREADS, then the runtime default.
inline void configure_threads(int requested) {
  if (requested > 0) {
    set_thread_count(requested);
    return;
  }
  if (const char* env = std::getenv("XFC_THREADS")) {
    try {
      int n = std::stoi(env);
      if (n > 0) set_thread_count(n);
    } catch (const std::exception&) {
    }
  }
}

} // namespace xfc
