#pragma once

namespace griduq {

/// Applies the GRIDUQ_THREADS cap (if set) to the OpenMP team size; in
/// deterministic mode forces a single thread. Returns the thread count in
/// effect.
int configure_threads(bool deterministic);

}  // namespace griduq
