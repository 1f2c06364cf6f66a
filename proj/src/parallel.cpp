#include "ggmm/parallel.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ggmm {

namespace {

int startup_threads() {
#ifdef _OPENMP
  static const int n = omp_get_max_threads();
  return n;
#else
  return 1;
#endif
}

}  // namespace

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(n > 0 ? n : startup_threads());
#else
  (void)n;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

int configure_threads() {
  startup_threads();
  const char* env = std::getenv("GGMM_THREADS");
  if (env == nullptr || *env == '\0') {
    set_threads(0);
    return max_threads();
  }
  const std::string s(env);
  if (s.find_first_not_of("0123456789") != std::string::npos || s.size() > 6)
    throw std::invalid_argument("GGMM_THREADS must be a non-negative integer, got '" + s + "'");
  set_threads(std::stoi(s));
  return max_threads();
}

}  // namespace ggmm
