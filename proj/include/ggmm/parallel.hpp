#pragma once

namespace ggmm {

/// Reads GGMM_THREADS and caps OpenMP parallelism accordingly (unset or 0
/// keeps the runtime default). Returns the resulting worker count. Throws
/// std::invalid_argument for a malformed value.
int configure_threads();

/// Current worker cap (1 without OpenMP).
int max_threads();

/// Sets the worker cap; n <= 0 restores the value chosen at startup.
void set_threads(int n);

}  // namespace ggmm
