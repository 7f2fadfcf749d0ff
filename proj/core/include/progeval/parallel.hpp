#pragma once

#include <cstddef>
#include <functional>

namespace progeval {

/// Process-wide cap on worker threads (CLI `--threads`). 0 means
/// hardware concurrency.
void set_max_threads(std::size_t n);
std::size_t max_threads();

/// Runs fn(i) for i in [0, n). Each index writes only its own output slot,
/// so results are independent of the schedule. Exceptions from workers are
/// rethrown (the one with the lowest index wins).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace progeval
