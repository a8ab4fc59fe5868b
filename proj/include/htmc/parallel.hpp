#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace htmc {

/// Global worker count used by parallel_for. Set once from the CLI; results
/// never depend on it because each item writes to its own slot.
inline int& thread_count() {
    static int n = 1;
    return n;
}

template <typename F>
void parallel_for(std::size_t count, F&& body, int threads = 0) {
    if (threads <= 0) threads = thread_count();
    if (threads <= 1 || count < 2) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    threads = static_cast<int>(std::min<std::size_t>(threads, count));
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex err_mutex;
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < count; i += threads) body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace htmc
