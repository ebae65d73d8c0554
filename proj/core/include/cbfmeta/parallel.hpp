#pragma once

#include <cstddef>
#include <functional>

namespace cbfmeta {

/// Worker count from CBFMETA_THREADS (default 1, clamped to hardware threads).
int thread_count();

/// Calls fn(i) for i in [0, n) on up to `threads` workers. Each index is
/// visited exactly once; callers write results into per-index slots so the
/// outcome does not depend on scheduling. The first exception is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace cbfmeta
