#pragma once

#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace tcbsde::par {

// Global worker count used by parallel_for. 0 restores the hardware default.
void set_thread_count(unsigned n);
unsigned thread_count();

// Runs body(begin, end) over contiguous chunks of [first, last), possibly on
// several threads. Bodies must write only to per-index slots; no reductions.
// Results are therefore identical for every thread count. The lowest-chunk
// exception, if any, is rethrown on the calling thread.
template <typename Body>
void parallel_for(std::size_t first, std::size_t last, Body&& body) {
    if (last <= first) return;
    const std::size_t n = last - first;
    const unsigned workers = thread_count();
    constexpr std::size_t kGrain = 2048;
    if (workers <= 1 || n < kGrain) {
        body(first, last);
        return;
    }
    const std::size_t chunks = std::min<std::size_t>(workers, (n + kGrain - 1) / kGrain);
    const std::size_t chunk = (n + chunks - 1) / chunks;
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(chunks);
    pool.reserve(chunks - 1);
    for (std::size_t c = 1; c < chunks; ++c) {
        const std::size_t lo = first + c * chunk;
        const std::size_t hi = std::min(last, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&body, &errors, c, lo, hi] {
            try {
                body(lo, hi);
            } catch (...) {
                errors[c] = std::current_exception();
            }
        });
    }
    try {
        body(first, std::min(last, first + chunk));
    } catch (...) {
        errors[0] = std::current_exception();
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace tcbsde::par
