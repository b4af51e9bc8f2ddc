#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace bel {

/// Worker count from BEL_THREADS, or 1 when unset or malformed.
[[nodiscard]] inline unsigned threads_from_env() {
    const char* raw = std::getenv("BEL_THREADS");
    if (raw == nullptr) return 1;
    try {
        const long v = std::stol(raw);
        return v > 0 ? static_cast<unsigned>(v) : 1u;
    } catch (...) {
        return 1u;
    }
}

/// Runs body(i) for i in [0, count) on up to `threads` workers. Work items
/// must write only to their own slot; if several throw, the exception from
/// the lowest index is rethrown so failures are scheduling-independent.
template <class Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body) {
    if (count == 0) return;
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::min<std::size_t>(count, 1024))));
    if (threads == 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (unsigned w = 0; w < threads; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
                    try {
                        body(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace bel
