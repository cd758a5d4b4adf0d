#pragma once

#include <cstddef>
#include <functional>

namespace didcatt {

/// Runs fn(0..count-1) on up to `jobs` threads. Each index owns its output
/// slot, so results do not depend on scheduling. If several tasks throw, the
/// exception from the lowest index is rethrown.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

/// Worker count from an explicit value, else DIDCATT_JOBS, else 1.
int resolve_jobs(int requested);

}  // namespace didcatt
