#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace ssvf {

// Work is split into fixed-size chunks that do not depend on the worker
// count, and chunk results are combined in index order, so reductions give
// bit-identical answers for any number of workers.
inline constexpr std::size_t parallel_chunk = 8192;

/// Apply fn(begin, end) over [0, count) in parallel; fn must not reduce
/// across chunks (pure map).
inline void parallel_for(std::size_t count, int workers,
                         const std::function<void(std::size_t, std::size_t)>& fn) {
    if (count == 0) return;
    const std::size_t nchunks = (count + parallel_chunk - 1) / parallel_chunk;
    if (workers <= 1 || nchunks == 1) {
        // Serial path still walks chunk by chunk: reduction callers combine
        // one partial per chunk, so ranges must not depend on worker count.
        for (std::size_t c = 0; c < nchunks; ++c) {
            const std::size_t b = c * parallel_chunk;
            fn(b, std::min(b + parallel_chunk, count));
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= nchunks) return;
            const std::size_t b = c * parallel_chunk;
            fn(b, std::min(b + parallel_chunk, count));
        }
    };
    std::vector<std::thread> pool;
    const int nt = std::min<int>(workers, static_cast<int>(nchunks));
    pool.reserve(static_cast<std::size_t>(nt));
    for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

/// Sum of term(i) over [0, count), chunk partials combined in index order.
inline double parallel_sum(std::size_t count, int workers,
                           const std::function<double(std::size_t)>& term) {
    if (count == 0) return 0.0;
    const std::size_t nchunks = (count + parallel_chunk - 1) / parallel_chunk;
    std::vector<double> partial(nchunks, 0.0);
    parallel_for(count, workers, [&](std::size_t b, std::size_t e) {
        // [b, e) always lies inside one chunk by construction.
        double s = 0.0;
        for (std::size_t i = b; i < e; ++i) s += term(i);
        partial[b / parallel_chunk] += s;
    });
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

/// Max of term(i) over [0, count). Max is order-independent, so this is
/// deterministic for free; the chunking just parallelizes it.
inline double parallel_max(std::size_t count, int workers,
                           const std::function<double(std::size_t)>& term) {
    if (count == 0) return 0.0;
    const std::size_t nchunks = (count + parallel_chunk - 1) / parallel_chunk;
    std::vector<double> partial(nchunks, 0.0);
    parallel_for(count, workers, [&](std::size_t b, std::size_t e) {
        double m = 0.0;
        for (std::size_t i = b; i < e; ++i) m = std::max(m, term(i));
        partial[b / parallel_chunk] = m;
    });
    double total = 0.0;
    for (double p : partial) total = std::max(total, p);
    return total;
}

/// Range-reduction forms: fn(begin, end) returns the reduction of one chunk.
/// Non-negative values assumed for the max form.
inline double parallel_reduce_max(std::size_t count, int workers,
                                  const std::function<double(std::size_t, std::size_t)>& fn) {
    if (count == 0) return 0.0;
    const std::size_t nchunks = (count + parallel_chunk - 1) / parallel_chunk;
    std::vector<double> partial(nchunks, 0.0);
    parallel_for(count, workers,
                 [&](std::size_t b, std::size_t e) { partial[b / parallel_chunk] = fn(b, e); });
    double total = 0.0;
    for (double p : partial) total = std::max(total, p);
    return total;
}

inline double parallel_reduce_sum(std::size_t count, int workers,
                                  const std::function<double(std::size_t, std::size_t)>& fn) {
    if (count == 0) return 0.0;
    const std::size_t nchunks = (count + parallel_chunk - 1) / parallel_chunk;
    std::vector<double> partial(nchunks, 0.0);
    parallel_for(count, workers,
                 [&](std::size_t b, std::size_t e) { partial[b / parallel_chunk] = fn(b, e); });
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

}  // namespace ssvf
