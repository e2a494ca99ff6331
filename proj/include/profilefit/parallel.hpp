#ifndef PROFILEFIT_PARALLEL_HPP
#define PROFILEFIT_PARALLEL_HPP

#include <cstddef>
#include <exception>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace profilefit {

// Runtime switch between the OpenMP kernels and their serial reference.
// Every parallel loop in the library writes into per-item slots and reduces
// in index order afterwards, so both modes produce bit-identical results;
// the tests assert that and the bench tool compares their runtimes.
bool parallel_enabled();
void set_parallel_enabled(bool on);
int worker_count();

template <typename Body>
void parallel_for(std::ptrdiff_t n, const Body& body) {
    if (parallel_enabled()) {
#ifdef _OPENMP
        std::exception_ptr pending = nullptr;
#pragma omp parallel for schedule(dynamic) shared(pending)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            try {
                body(i);
            } catch (...) {
#pragma omp critical(profilefit_parallel_for)
                if (!pending)
                    pending = std::current_exception();
            }
        }
        if (pending)
            std::rethrow_exception(pending);
        return;
#endif
    }
    for (std::ptrdiff_t i = 0; i < n; ++i)
        body(i);
}

} // namespace profilefit

#endif
