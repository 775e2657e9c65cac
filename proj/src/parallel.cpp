#include "qsm/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace qsm {

namespace {
std::atomic<int> g_threads{0}; // 0 = auto
}

void set_thread_count(int n) {
    g_threads.store(n < 0 ? 0 : n);
}

int thread_count() {
    int n = g_threads.load();
    if (n > 0) return n;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(std::int64_t n, std::int64_t grain,
                  const std::function<void(std::int64_t, std::int64_t)>& fn) {
    if (n <= 0) return;
    if (grain <= 0) grain = 1;
    const std::int64_t chunks = chunk_count(n, grain);
    const int workers = static_cast<int>(std::min<std::int64_t>(thread_count(), chunks));
    if (workers <= 1) {
        for (std::int64_t c = 0; c < chunks; ++c)
            fn(c * grain, std::min(n, (c + 1) * grain));
        return;
    }
    std::atomic<std::int64_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex err_mutex;
    auto body = [&]() {
        for (;;) {
            const std::int64_t c = next.fetch_add(1);
            if (c >= chunks || failed.load()) return;
            try {
                fn(c * grain, std::min(n, (c + 1) * grain));
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (int w = 1; w < workers; ++w) pool.emplace_back(body);
    body();
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

double parallel_sum(std::int64_t n, std::int64_t grain,
                    const std::function<double(std::int64_t, std::int64_t)>& chunk_sum) {
    if (n <= 0) return 0.0;
    if (grain <= 0) grain = 1;
    const std::int64_t chunks = chunk_count(n, grain);
    std::vector<double> partial(static_cast<std::size_t>(chunks));
    parallel_for(chunks, 1, [&](std::int64_t c0, std::int64_t c1) {
        for (std::int64_t c = c0; c < c1; ++c)
            partial[c] = chunk_sum(c * grain, std::min(n, (c + 1) * grain));
    });
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

} // namespace qsm
