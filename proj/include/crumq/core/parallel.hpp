#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

namespace crumq {

/// Runs fn(i) for i in [0, n) on up to `workers` OpenMP threads with dynamic
/// scheduling. If any iteration throws, the exception from the lowest index is
/// rethrown after the loop finishes.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
    std::exception_ptr first;
    std::size_t first_index = n;
    std::mutex mu;
    const long count = static_cast<long>(n);
    const int threads = workers < 1 ? 1 : workers;
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (long i = 0; i < count; ++i) {
        try {
            fn(static_cast<std::size_t>(i));
        } catch (...) {
            std::lock_guard lock(mu);
            if (static_cast<std::size_t>(i) < first_index) {
                first_index = static_cast<std::size_t>(i);
                first = std::current_exception();
            }
        }
    }
    if (first) std::rethrow_exception(first);
}

}  // namespace crumq
