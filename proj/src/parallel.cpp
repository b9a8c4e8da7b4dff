#include "ftl/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ftl {

namespace {
bool g_parallel = true;
}

bool parallel_enabled() { return g_parallel; }

void set_parallel_enabled(bool on) { g_parallel = on; }

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

} // namespace ftl
