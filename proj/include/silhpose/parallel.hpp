#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace silhpose {

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Work items are
/// independent and results must be written to per-index slots, so any worker
/// count produces identical output. Exceptions propagate after join.
inline void parallel_for(size_t n, int workers, const std::function<void(size_t)>& fn) {
    if (n == 0) {
        return;
    }
    const int nw = std::max(1, workers);
    if (nw == 1 || n == 1) {
        for (size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::exception_ptr> errors(static_cast<size_t>(nw));
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(nw));
    for (int t = 0; t < nw; ++t) {
        threads.emplace_back([&, t] {
            try {
                for (;;) {
                    const size_t i = next.fetch_add(1);
                    if (i >= n) {
                        break;
                    }
                    fn(i);
                }
            } catch (...) {
                errors[static_cast<size_t>(t)] = std::current_exception();
            }
        });
    }
    for (std::thread& th : threads) {
        th.join();
    }
    for (const std::exception_ptr& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

}  // namespace silhpose
