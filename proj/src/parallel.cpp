#include "blq/parallel.hpp"

#include <omp.h>

#include <atomic>

namespace blq {

namespace {
std::atomic<int> g_threads{0};
}

void set_worker_threads(int threads) { g_threads = threads < 0 ? 0 : threads; }

int worker_threads() {
    const int t = g_threads.load();
    return t > 0 ? t : omp_get_max_threads();
}

} // namespace blq
