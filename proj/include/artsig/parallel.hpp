#pragma once

#include <cstddef>
#include <functional>

namespace artsig {

// Number of worker threads used by parallel_for when a call site passes 0.
// Defaults to 1; the CLI sets it from --workers.
void set_default_workers(std::size_t workers);
std::size_t default_workers();

// Runs body(i) for every i in [0, count). Indices are split into contiguous
// blocks, one per worker. Callers must write results into per-index slots so
// the outcome is independent of the worker count. The first exception thrown
// by any body is rethrown on the calling thread.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body,
                  std::size_t workers = 0);

}  // namespace artsig
