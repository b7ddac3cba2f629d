#pragma once

#include <functional>

#include "tdr/tensor.hpp"

namespace tdr {

/// Worker cap: the TDR_THREADS environment variable when set (minimum 1),
/// otherwise the hardware concurrency.
int thread_cap();

/// Runs fn(0..n-1) across up to thread_cap() workers. Tasks must be
/// independent; each writes only its own output slot, so results do not
/// depend on the degree of parallelism. Nested calls from inside a worker run
/// serially. The first exception thrown by a task is rethrown to the caller.
void parallel_for(Index n, const std::function<void(Index)>& fn);

}  // namespace tdr
