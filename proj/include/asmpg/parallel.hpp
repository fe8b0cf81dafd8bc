#pragma once

#include <cstddef>
#include <functional>

namespace asmpg {

/// Runs fn(0..n-1) on up to `workers` OpenMP threads (0 = runtime default,
/// 1 = the calling thread only). The first exception thrown is rethrown.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

/// Thread count parallel_for would use.
int resolve_workers(int workers);

}  // namespace asmpg
