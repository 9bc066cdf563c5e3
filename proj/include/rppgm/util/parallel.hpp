#pragma once

#include <cstddef>
#include <functional>

namespace rppgm {

// Worker cap: the override when set, else RPPGM_THREADS (default 1).
std::size_t worker_count();
// 0 clears the override.
void set_worker_count(std::size_t n);

// Runs body(i) for i in [0, n). Each index must write only to its own output
// slot; results are therefore independent of how indices are scheduled.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace rppgm
