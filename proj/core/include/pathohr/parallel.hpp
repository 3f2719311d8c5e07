#pragma once

#include <cstddef>
#include <functional>

namespace pathohr {

/// Worker count: PATHOHR_THREADS if set to a positive integer, otherwise
/// the hardware concurrency (at least 1).
std::size_t thread_budget();

/// Calls fn(i) for i in [0, n) on up to `threads` workers. Work is claimed
/// dynamically, so callers must write results by index rather than rely on
/// completion order. The first exception thrown by any fn is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, std::size_t threads = thread_budget());

}  // namespace pathohr
