#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace tcbsde {

// Cross-path reductions run serially in index order so that results never
// depend on the worker count. Sums are compensated: plain accumulation over
// 1e5 paths drifts by ~1e-12, which the exactness contracts cannot absorb.

inline double compensated_sum(std::span<const double> xs) {
    double s = 0.0, c = 0.0;
    for (double x : xs) {
        const double y = x - c;
        const double t = s + y;
        c = (t - s) - y;
        s = t;
    }
    return s;
}

inline double mean(std::span<const double> xs) {
    return xs.empty() ? 0.0 : compensated_sum(xs) / static_cast<double>(xs.size());
}

inline double sample_variance(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean(xs);
    double s = 0.0, c = 0.0;
    for (double x : xs) {
        const double y = (x - m) * (x - m) - c;
        const double t = s + y;
        c = (t - s) - y;
        s = t;
    }
    return s / static_cast<double>(xs.size() - 1);
}

inline double standard_error(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    return std::sqrt(sample_variance(xs) / static_cast<double>(xs.size()));
}

}  // namespace tcbsde
