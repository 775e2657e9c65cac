#pragma once

#include <cstdint>
#include <functional>

namespace qsm {

// Global worker count used by parallel_for. Thread count never changes
// results: work is split into fixed-size chunks and any reduction combines
// per-chunk partials in chunk order.
void set_thread_count(int n);
int thread_count();

// Calls fn(begin, end) for consecutive chunks [k*grain, min(n,(k+1)*grain)).
// Chunks may run on any worker; fn must only write chunk-local state.
void parallel_for(std::int64_t n, std::int64_t grain,
                  const std::function<void(std::int64_t, std::int64_t)>& fn);

inline std::int64_t chunk_count(std::int64_t n, std::int64_t grain) {
    return (n + grain - 1) / grain;
}

// Sum of chunk_sum(begin, end) over fixed chunks, combined in chunk order so
// the result is independent of the worker count.
double parallel_sum(std::int64_t n, std::int64_t grain,
                    const std::function<double(std::int64_t, std::int64_t)>& chunk_sum);

} // namespace qsm
