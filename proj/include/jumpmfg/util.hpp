#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace jumpmfg {

// Chunked parallel loop with pre-partitioned ranges; results are identical for
// any thread count because workers write to disjoint, pre-assigned slots.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                         std::size_t n_threads = 0) {
    if (n == 0) return;
    if (n_threads == 0) n_threads = std::thread::hardware_concurrency();
    if (n_threads <= 1 || n < 2 * n_threads) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(n_threads);
    const std::size_t chunk = (n + n_threads - 1) / n_threads;
    for (std::size_t w = 0; w < n_threads; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        workers.emplace_back([&body, lo, hi] {
            for (std::size_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& t : workers) t.join();
}

// Sample mean and standard error of the mean.
struct MeanStat {
    double mean = 0.0;
    double stderror = 0.0;
    std::size_t n = 0;
};

inline MeanStat mean_stat(const std::vector<double>& xs) {
    MeanStat s;
    s.n = xs.size();
    if (s.n == 0) return s;
    double sum = 0.0;
    for (double x : xs) sum += x;
    s.mean = sum / static_cast<double>(s.n);
    if (s.n > 1) {
        double ss = 0.0;
        for (double x : xs) {
            const double d = x - s.mean;
            ss += d * d;
        }
        s.stderror = std::sqrt(ss / (static_cast<double>(s.n) * static_cast<double>(s.n - 1)));
    }
    return s;
}

}  // namespace jumpmfg
