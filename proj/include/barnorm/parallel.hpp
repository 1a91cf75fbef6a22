#pragma once

// Minimal deterministic parallel map: chunks [0,count) across threads. Each
// index writes only its own output slot, so results are identical for any
// worker count.

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace barnorm {

inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body, int workers = 1) {
    if (workers <= 1 || count < 64) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    workers = std::min<int>(workers, static_cast<int>(std::thread::hardware_concurrency()));
    workers = std::max(workers, 1);
    std::vector<std::thread> pool;
    std::size_t chunk = (count + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        std::size_t lo = w * chunk;
        std::size_t hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body] {
            for (std::size_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace barnorm
