#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace specreg {

/// Worker count: SPECREG_THREADS if set and positive, otherwise hardware concurrency.
inline unsigned thread_count() {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("SPECREG_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) return std::min<unsigned>(static_cast<unsigned>(v), hw);
    }
    return hw;
}

/// Runs body(i) for i in [begin, end). Iterations must be independent; each
/// writes only its own outputs, so results do not depend on the worker count.
template <class Body>
void parallel_for(int begin, int end, Body&& body) {
    const int n = end - begin;
    if (n <= 0) return;
    const unsigned workers = std::min<unsigned>(thread_count(), static_cast<unsigned>(n));
    if (workers <= 1) {
        for (int i = begin; i < end; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const int chunk = (n + static_cast<int>(workers) - 1) / static_cast<int>(workers);
    for (unsigned w = 0; w < workers; ++w) {
        const int lo = begin + static_cast<int>(w) * chunk;
        const int hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body] {
            for (int i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace specreg
