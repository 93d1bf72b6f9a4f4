#pragma once

#include <cstddef>
#include <functional>

namespace schn {

// Worker count from SCHN_NUM_THREADS, else the hardware concurrency (>= 1).
int num_threads();

// Runs body(i) for i in [0, count) across num_threads() workers. Each index
// must write only to its own output slot, so results do not depend on
// scheduling. The exception from the lowest failing index is rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace schn
