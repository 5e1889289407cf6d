#pragma once

#include <cstddef>
#include <functional>

namespace slab {

// Worker cap from SLAB_THREADS (default 1).
std::size_t worker_count();

// Runs fn(i) for i in [0, n). Each index is written by exactly one worker, so
// results stored per index are identical to a serial run.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace slab
