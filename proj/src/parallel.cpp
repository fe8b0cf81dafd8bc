#include "asmpg/parallel.hpp"

#include <exception>

#include <omp.h>

namespace asmpg {

int resolve_workers(int workers) { return workers > 0 ? workers : omp_get_max_threads(); }

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const int threads = resolve_workers(workers);
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(asmpg_parallel_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace asmpg
