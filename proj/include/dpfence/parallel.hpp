#pragma once

namespace dpfence {

// Caps the number of OpenMP threads used by every kernel. n <= 0 restores
// the runtime default. Kernels produce bit-identical output for any count.
void set_thread_count(int n);
int thread_count();

// Reads DP_DEFENCE_THREADS; returns 0 when unset or unparsable.
int thread_count_from_env();

}  // namespace dpfence
