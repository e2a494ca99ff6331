#include "profilefit/parallel.hpp"

namespace profilefit {

namespace {
bool g_parallel = true;
}

bool parallel_enabled() { return g_parallel; }

void set_parallel_enabled(bool on) { g_parallel = on; }

int worker_count() {
#ifdef _OPENMP
    return g_parallel ? omp_get_max_threads() : 1;
#else
    return 1;
#endif
}

} // namespace profilefit
