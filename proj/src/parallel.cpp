#include "setchoice/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace setchoice {

size_t resolve_threads(size_t requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("SETCHOICE_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<size_t>(v);
    }
    return 1;
}

void parallel_for(size_t n, size_t threads, const std::function<void(size_t)>& fn) {
    threads = resolve_threads(threads);
    if (threads > n) threads = n;
    if (threads <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::mutex err_mu;
    std::exception_ptr first_err;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&, w]() {
            for (size_t i = w; i < n; i += threads) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mu);
                    if (!first_err) first_err = std::current_exception();
                }
            }
        });
    }
    for (std::thread& t : pool) t.join();
    if (first_err) std::rethrow_exception(first_err);
}

} // namespace setchoice
