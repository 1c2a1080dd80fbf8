#pragma once

#include <cstddef>
#include <functional>

namespace nnland {

/// Worker count from NNLAND_WORKERS (default 1, clamped to [1, 64]).
std::size_t worker_count();

/// Calls fn(i) for every i in [0, n). Work is split into contiguous chunks
/// across worker_count() threads; fn must only write to slot i of any
/// shared output. The first exception thrown by any worker is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace nnland
