#pragma once

#include <cstddef>
#include <functional>

namespace nemo {

// Worker count for data-parallel sections: NEMO_THREADS if set (clamped to
// >= 1), otherwise the machine's hardware concurrency.
int worker_count();

// Runs fn(begin, end, worker) over W contiguous chunks of [0, n). Worker 0
// executes on the calling thread. Chunk boundaries depend only on n and W,
// so results are reproducible for a fixed worker count.
void parallel_chunks(std::size_t n,
                     const std::function<void(std::size_t, std::size_t, int)>& fn);

}  // namespace nemo
