#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <optional>
#include <thread>
#include <vector>

namespace jumpdrift {

inline unsigned default_thread_count() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1U : n;
}

/// Outcome of one task of parallel_map: a value or the captured exception.
template <typename T>
struct TaskResult {
    std::optional<T> value;
    std::exception_ptr error;

    bool ok() const { return value.has_value(); }
};

/// Runs fn(i) for i in [0, n) on a pool of threads pulling from a shared
/// counter. Results come back indexed by i, so any reduction over them is
/// independent of the schedule.
template <typename Fn>
auto parallel_map(std::size_t n, unsigned threads, Fn&& fn) {
    using T = std::invoke_result_t<Fn&, std::size_t>;
    std::vector<TaskResult<T>> results(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                results[i].value.emplace(fn(i));
            } catch (...) {
                results[i].error = std::current_exception();
            }
        }
    };
    const unsigned t = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (t == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(t);
        for (unsigned k = 0; k < t; ++k) pool.emplace_back(worker);
    }
    return results;
}

}  // namespace jumpdrift
