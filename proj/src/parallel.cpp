#include "tcbsde/parallel.hpp"

#include <atomic>

namespace tcbsde::par {

namespace {
std::atomic<unsigned> g_threads{0};
}

void set_thread_count(unsigned n) { g_threads.store(n); }

unsigned thread_count() {
    unsigned n = g_threads.load();
    if (n == 0) {
        n = std::thread::hardware_concurrency();
        if (n == 0) n = 1;
    }
    return n;
}

}  // namespace tcbsde::par
