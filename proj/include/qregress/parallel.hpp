#pragma once

#include <cstddef>
#include <functional>

namespace qregress {

/// Worker count: QREGRESS_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

/// Calls fn(i) for i in [0, n), split into contiguous chunks across workers.
/// Callers that reduce results must write into per-index slots and reduce
/// sequentially afterwards so the result does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace qregress
