#pragma once

#include <cstdint>
#include <exception>
#include <mutex>

namespace blq {

// Caps the worker count used by parallel_for (0 restores the runtime default).
void set_worker_threads(int threads);
int worker_threads();

// Calls body(i) for i in [0, count). Iterations must be independent; the first exception
// thrown by any iteration is rethrown on the calling thread.
template <typename Body>
void parallel_for(std::int64_t count, Body&& body) {
    std::exception_ptr failure;
    std::mutex guard;
    const int threads = count >= 4096 ? worker_threads() : 1;
#pragma omp parallel for schedule(static) num_threads(threads)
    for (std::int64_t i = 0; i < count; ++i) {
        try {
            body(i);
        } catch (...) {
            std::lock_guard<std::mutex> lock(guard);
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
}

} // namespace blq
