#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace sail {

namespace detail {
inline std::atomic<unsigned>& thread_override() {
    static std::atomic<unsigned> n{0};
    return n;
}
} // namespace detail

/// Caps the worker count. 0 restores the default (SAIL_ALIGN_THREADS, else hardware concurrency).
inline void set_num_threads(unsigned n) { detail::thread_override().store(n); }

inline unsigned num_threads() {
    if (unsigned n = detail::thread_override().load(); n > 0) return n;
    if (const char* env = std::getenv("SAIL_ALIGN_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<unsigned>(v);
        } catch (const std::exception&) {
        }
    }
    static const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    return hw;
}

/// Runs fn(begin, end) over contiguous chunks of [0, n). Callers must make each
/// index's result independent of the chunking, which keeps outputs identical
/// for every worker count.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t min_chunk = 8) {
    if (n == 0) return;
    const std::size_t workers = std::min<std::size_t>(num_threads(), (n + min_chunk - 1) / min_chunk);
    if (workers <= 1) {
        fn(std::size_t{0}, n);
        return;
    }
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t b = w * chunk;
        const std::size_t e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&, w, b, e] {
            try {
                fn(b, e);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& err : errors) {
        if (err) std::rethrow_exception(err);
    }
}

} // namespace sail
