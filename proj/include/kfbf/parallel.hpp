#pragma once

#include <cstddef>
#include <functional>

namespace kfbf {

/// Worker count: KFBF_THREADS if set (>= 1), else the hardware concurrency.
std::size_t worker_threads();

/// Runs fn(i) for i in [0, n) across worker_threads() threads. Each index is
/// processed exactly once; callers write results by index so the outcome is
/// independent of scheduling. The first exception thrown is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace kfbf
