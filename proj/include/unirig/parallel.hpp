#ifndef UNIRIG_PARALLEL_HPP
#define UNIRIG_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace unirig {

// Global worker cap (the CLI --threads flag lands here).  Results never
// depend on the thread count: work is chunked statically and reductions run
// in index order.
inline std::atomic<int>& max_threads_slot() {
    static std::atomic<int> slot{0}; // 0: use hardware concurrency
    return slot;
}

inline void set_max_threads(int n) { max_threads_slot().store(n); }

inline int worker_count(std::size_t jobs) {
    int cap = max_threads_slot().load();
    if (cap <= 0) cap = static_cast<int>(std::thread::hardware_concurrency());
    if (cap <= 0) cap = 1;
    return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(cap),
                                                  std::max<std::size_t>(jobs, 1)));
}

// body(i) for i in [0, n); each index touches only its own output slot.
template <class F>
void parallel_for(std::size_t n, F&& body) {
    const int workers = worker_count(n);
    if (workers <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t)
        pool.emplace_back([&, t] {
            const std::size_t lo = n * static_cast<std::size_t>(t) /
                                   static_cast<std::size_t>(workers);
            const std::size_t hi = n * static_cast<std::size_t>(t + 1) /
                                   static_cast<std::size_t>(workers);
            for (std::size_t i = lo; i < hi; ++i) body(i);
        });
    for (auto& th : pool) th.join();
}

} // namespace unirig

#endif
