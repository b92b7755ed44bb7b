// SPDX-License-Identifier: MIT
#pragma once

#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace mfg {

// Process-wide worker count for data-parallel loops. 1 = serial (default),
// 0 = hardware concurrency. Only loops with disjoint writes use it, so the
// numeric output is identical for every setting.
inline std::atomic<int>& thread_count() {
    static std::atomic<int> n{1};
    return n;
}

inline void set_threads(int n) { thread_count().store(n < 0 ? 1 : n); }

template <typename Fn>
void parallel_for(long count, Fn&& fn) {
    int nt = thread_count().load();
    if (nt == 0) nt = static_cast<int>(std::thread::hardware_concurrency());
    if (nt <= 1 || count < 2048) {
        for (long i = 0; i < count; ++i) fn(i);
        return;
    }
    long workers = std::min<long>(nt, count);
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errs(static_cast<size_t>(workers));
    pool.reserve(static_cast<size_t>(workers));
    long chunk = (count + workers - 1) / workers;
    for (long w = 0; w < workers; ++w) {
        long lo = w * chunk;
        long hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, w, &fn, &errs] {
            try {
                for (long i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                errs[static_cast<size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errs)
        if (e) std::rethrow_exception(e);
}

}  // namespace mfg
