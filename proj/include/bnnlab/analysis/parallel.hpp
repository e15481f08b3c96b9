#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace bnnlab::analysis {

/// Environment variable selecting the Monte-Carlo worker count.
inline constexpr const char* kWorkersEnv = "BNNLAB_WORKERS";

inline std::size_t workers_from_env() {
    if (const char* v = std::getenv(kWorkersEnv)) {
        try {
            const long n = std::stol(v);
            if (n > 0) {
                return static_cast<std::size_t>(n);
            }
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/**
 * Runs fn(i) for i in [0, count) on `workers` threads and returns the
 * results in index order. Work is strided across threads; callers must make
 * fn(i) depend only on i so that results do not depend on the schedule.
 */
template <class Result, class Fn>
std::vector<Result> run_indexed(std::size_t count, std::size_t workers, Fn&& fn) {
    std::vector<Result> results(count);
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(count, 1));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) {
            results[i] = fn(i);
        }
        return results;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < count; i += workers) {
                    results[i] = fn(i);
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
    return results;
}

}  // namespace bnnlab::analysis
