#pragma once

#include <cstdint>
#include <functional>

namespace ccfpse {

/// Worker count for internal parallel loops: CCFPSE_THREADS if set, otherwise
/// the hardware concurrency. Always >= 1.
int max_threads();

/// Overrides max_threads() for the process (0 restores the default).
void set_max_threads(int threads);

/// Runs fn(i) for i in [0, n) split into contiguous chunks across workers.
/// Callers must make each index write disjoint memory so the result does not
/// depend on the worker count.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

}  // namespace ccfpse
