#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace flsa {

// Runs fn(i) for i in [0, n) on up to `workers` threads. Results must be
// written by index so the outcome does not depend on scheduling. After a
// failure no new items start; the exception with the lowest index is
// rethrown.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex mu;
    std::exception_ptr first_error;
    std::size_t first_index = n;

    auto body = [&] {
        while (!failed.load()) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(mu);
                if (i < first_index) {
                    first_index = i;
                    first_error = std::current_exception();
                }
                failed.store(true);
            }
        }
    };
    const auto count = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
    {
        std::vector<std::jthread> pool;
        pool.reserve(count);
        for (std::size_t t = 0; t < count; ++t) pool.emplace_back(body);
    }
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace flsa
