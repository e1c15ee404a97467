#pragma once

#include <cstddef>
#include <functional>

namespace pmm {

/// Runs fn(i) for i in [0, n) on up to `workers` threads (0 = hardware
/// concurrency). Each index runs exactly once; callers write results into
/// per-index slots and reduce them in index order afterwards, so the outcome
/// does not depend on the worker count. The first exception thrown by any
/// task is rethrown after all threads join.
void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& fn);

std::size_t resolve_workers(std::size_t requested);

}  // namespace pmm
