#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace cavtrack {

// Chunked parallel loop over [0, n). The worker receives disjoint index
// ranges; results must not depend on the split, so any per-index randomness
// has to be counter-seeded by the caller.
template <typename F>
void parallel_for(std::size_t n, int threads, const F& body) {
    if (threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    const std::size_t nt = std::min<std::size_t>(threads, n);
    std::vector<std::thread> pool;
    pool.reserve(nt);
    for (std::size_t t = 0; t < nt; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < n; i += nt) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace cavtrack
