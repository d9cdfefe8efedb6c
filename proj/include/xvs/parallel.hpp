// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace xvs {

inline int worker_count() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs fn(worker, begin, end) over contiguous chunks of [begin, end).
///
/// Chunk boundaries depend only on the range and `workers`, so per-worker
/// partial results reduced in worker order are reproducible.
template <typename Fn>
void parallel_chunks(int begin, int end, int workers, Fn&& fn) {
    const int n = end - begin;
    if (n <= 0) {
        return;
    }
    workers = std::clamp(workers, 1, n);
    if (workers == 1) {
        fn(0, begin, end);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(workers));
    std::exception_ptr error;
    std::mutex error_mutex;
    for (int w = 0; w < workers; ++w) {
        const int lo = begin + static_cast<int>(static_cast<long long>(n) * w / workers);
        const int hi = begin + static_cast<int>(static_cast<long long>(n) * (w + 1) / workers);
        threads.emplace_back([&, w, lo, hi] {
            try {
                fn(w, lo, hi);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : threads) {
        t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

} // namespace xvs
