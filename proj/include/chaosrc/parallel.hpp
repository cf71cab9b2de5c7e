#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace chaosrc {

/// Run fn(i) for i in [0, n) on up to n_threads workers. Items are claimed
/// through an atomic counter; callers needing deterministic output write
/// results into index-addressed slots, so the reduction order never depends
/// on scheduling. The first exception thrown by any worker is rethrown after
/// all workers have joined.
template <class Fn>
void parallel_for(long n, int n_threads, Fn&& fn) {
    if (n <= 0) return;
    const int workers = static_cast<int>(std::min<long>(std::max(1, n_threads), n));
    if (workers == 1) {
        for (long i = 0; i < n; ++i) fn(i);
        return;
    }

    std::atomic<long> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto work = [&] {
        for (;;) {
            const long i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= n || failed.load(std::memory_order_relaxed)) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true, std::memory_order_relaxed);
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace chaosrc
