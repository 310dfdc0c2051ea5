#pragma once

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace panosynth {

/// 0 selects the hardware concurrency.
inline int resolve_threads(int requested)
{
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs fn(begin, end, worker) over contiguous, disjoint chunks of [0, count).
/// Chunk boundaries depend only on `count` and the worker count; callers keep
/// results schedule-independent by writing disjoint outputs.
template <class Fn>
void parallel_chunks(int count, int threads, Fn&& fn)
{
    const int workers = std::clamp(resolve_threads(threads), 1, std::max(count, 1));
    if (workers == 1 || count <= 1) {
        if (count > 0) fn(0, count, 0);
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        const int begin = static_cast<int>(static_cast<long long>(count) * w / workers);
        const int end = static_cast<int>(static_cast<long long>(count) * (w + 1) / workers);
        pool.emplace_back([&, begin, end, w] {
            try {
                fn(begin, end, w);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

/// Calls fn(index) for every index in [0, count).
template <class Fn>
void parallel_for(int count, int threads, Fn&& fn)
{
    parallel_chunks(count, threads, [&](int begin, int end, int) {
        for (int k = begin; k < end; ++k) fn(k);
    });
}

} // namespace panosynth
