#pragma once

#include <cstdint>
#include <functional>

namespace gtasr::parallel {

/// Worker count from GTASR_THREADS (0 or unset = hardware concurrency).
int thread_count();

/// Runs body(i) for i in [0, n). Every index is handled by exactly one worker,
/// so results never depend on the worker count as long as bodies write disjoint outputs.
void for_each_index(std::int64_t n, const std::function<void(std::int64_t)>& body);

}  // namespace gtasr::parallel
