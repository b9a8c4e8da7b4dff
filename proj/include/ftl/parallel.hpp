#pragma once

// Small wrapper around OpenMP so kernels can be forced onto the serial path
// at runtime (tests compare both, the benchmark times both). Every parallel
// loop in this project is written so that thread count has no effect on the
// output bytes: work items either write disjoint slots or produce partials
// that are combined in a fixed order afterwards.

namespace ftl {

bool parallel_enabled();
void set_parallel_enabled(bool on);

// omp_get_max_threads(), or 1 when built without OpenMP.
int max_threads();

} // namespace ftl
