#pragma once

#include <cstddef>
#include <functional>

namespace capnet {

// Worker cap from CAPNET_THREADS; 0 or unset means sequential.
std::size_t worker_count();

// Runs fn(i) for i in [0, n). With more than one worker, indices are split
// into contiguous chunks; fn must only write to per-index slots so results
// do not depend on the schedule.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace capnet
