#pragma once

// Checkpointed Cesaro means and the chunked averaging engine behind them.
//
// The index range 1..N is cut into fixed segments (checkpoints are always
// segment ends, everything else is cut every `block` terms). Each segment is
// summed with compensation on whichever thread picks it up, and the segment
// sums are folded left to right. The segment layout depends only on N, the
// checkpoints and the block size, never on the thread count, so results are
// bit-identical for any number of threads.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "ergolab/errors.hpp"
#include "ergolab/summation.hpp"

namespace ergolab {

template <class Value, class Index = std::size_t>
struct CesaroSeries {
    std::vector<Index> checkpoints;
    std::vector<Value> values;

    void push(Index checkpoint, Value value) {
        if (!checkpoints.empty() && !(checkpoints.back() < checkpoint))
            throw DomainError("CesaroSeries: checkpoints must be strictly increasing");
        checkpoints.push_back(checkpoint);
        values.push_back(std::move(value));
    }

    std::size_t size() const { return checkpoints.size(); }
    const Value& final_value() const { return values.back(); }
};

/// {1, 2, 4, ..., N}; N is always included.
inline std::vector<std::size_t> geometric_checkpoints(std::size_t N) {
    if (N == 0) throw DomainError("geometric_checkpoints: N must be >= 1");
    std::vector<std::size_t> out;
    for (std::size_t c = 1; c < N; c *= 2) out.push_back(c);
    out.push_back(N);
    return out;
}

/// Empty -> geometric default; otherwise checks 1 <= c <= N, strictly increasing.
inline std::vector<std::size_t> resolve_checkpoints(std::size_t N, std::vector<std::size_t> cps) {
    if (N == 0) throw DomainError("checkpoints: N must be >= 1");
    if (cps.empty()) return geometric_checkpoints(N);
    for (std::size_t i = 0; i < cps.size(); ++i) {
        if (cps[i] < 1 || cps[i] > N)
            throw DomainError("checkpoints: " + std::to_string(cps[i]) + " outside 1.." + std::to_string(N));
        if (i > 0 && cps[i] <= cps[i - 1]) throw DomainError("checkpoints: must be strictly increasing");
    }
    return cps;
}

struct EngineOptions {
    /// Worker threads; 0 means hardware concurrency.
    unsigned threads = 1;
    /// Terms per segment between checkpoints.
    std::size_t block = 1024;
};

namespace detail {

struct Segment {
    std::size_t first;
    std::size_t last;
    bool closes_checkpoint;
};

inline std::vector<Segment> make_segments(const std::vector<std::size_t>& checkpoints, std::size_t block) {
    std::vector<Segment> segs;
    std::size_t start = 1;
    for (std::size_t c : checkpoints) {
        while (start <= c) {
            const std::size_t end = std::min(c, start + block - 1);
            segs.push_back({start, end, end == c});
            start = end + 1;
        }
    }
    return segs;
}

template <class Work>
void run_parallel(std::size_t count, unsigned threads, Work&& work) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) work(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) work(i);
            } catch (...) {
                errors[t] = std::current_exception();
                next.store(count);
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace detail

/// Partial sums sum_{n=1}^{c} term(n) at every checkpoint c, for a vector
/// valued term of `width` reals. `term(n, out)` must fill `out` and be safe to
/// call concurrently for distinct n.
template <class TermFn>
std::vector<std::vector<double>> cesaro_sums(const std::vector<std::size_t>& checkpoints, std::size_t width,
                                             TermFn&& term, const EngineOptions& opt = {}, bool divide = false) {
    if (opt.block == 0) throw DomainError("cesaro: block must be >= 1");
    const auto segs = detail::make_segments(checkpoints, opt.block);
    std::vector<CompensatedVector> partial(segs.size());
    detail::run_parallel(segs.size(), opt.threads, [&](std::size_t s) {
        CompensatedVector acc(width);
        std::vector<double> buf(width);
        for (std::size_t n = segs[s].first; n <= segs[s].last; ++n) {
            term(n, std::span<double>(buf));
            acc.add(buf);
        }
        partial[s] = std::move(acc);
    });
    std::vector<std::vector<double>> out;
    out.reserve(checkpoints.size());
    CompensatedVector total(width);
    std::size_t next_cp = 0;
    for (std::size_t s = 0; s < segs.size(); ++s) {
        total.merge(partial[s]);
        if (segs[s].closes_checkpoint) {
            out.push_back(divide ? total.divided_value(static_cast<double>(checkpoints[next_cp])) : total.value());
            ++next_cp;
        }
    }
    return out;
}

/// Means (1/c) * sum_{n=1}^{c} term(n) at every checkpoint c.
template <class TermFn>
std::vector<std::vector<double>> cesaro_means(const std::vector<std::size_t>& checkpoints, std::size_t width,
                                              TermFn&& term, const EngineOptions& opt = {}) {
    return cesaro_sums(checkpoints, width, std::forward<TermFn>(term), opt, true);
}

} // namespace ergolab
