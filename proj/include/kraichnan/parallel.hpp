#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace kraichnan {

inline unsigned default_threads() {
    if (const char* e = std::getenv("KRAICHNAN_THREADS")) {
        try {
            const long v = std::stol(e);
            if (v >= 1) return unsigned(v);
        } catch (...) {
        }
    }
    return 1;
}

// Static contiguous partition of [0, n); f(begin, end) per chunk.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& f) {
    threads = std::max(1u, std::min<unsigned>(threads, unsigned(std::max<std::size_t>(1, n / 64))));
    if (threads == 1) {
        f(std::size_t(0), n);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
        const std::size_t b = t * chunk, e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&f, b, e] { f(b, e); });
    }
    for (auto& th : pool) th.join();
}

}  // namespace kraichnan
