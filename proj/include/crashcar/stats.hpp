#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "crashcar/error.hpp"

namespace crashcar {

inline double mean_of(std::span<const double> v) {
    if (v.empty()) throw DomainError("mean of empty sample");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

/// Unbiased (n - 1) sample variance.
inline double variance_of(std::span<const double> v) {
    if (v.size() < 2) throw DomainError("variance needs at least 2 values");
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return ss / static_cast<double>(v.size() - 1);
}

inline double sd_of(std::span<const double> v) { return std::sqrt(variance_of(v)); }

/// Linear interpolation between order statistics (R type 7).
inline double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw DomainError("quantile of empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct PosteriorSummary {
    double mean = 0.0;
    double sd = 0.0;
    double lower = 0.0;  ///< 2.5%
    double upper = 0.0;  ///< 97.5%

    bool excludes_zero() const { return lower > 0.0 || upper < 0.0; }
    bool covers(double v) const { return lower <= v && v <= upper; }
};

inline PosteriorSummary summarize_draws(std::span<const double> draws) {
    PosteriorSummary s;
    s.mean = mean_of(draws);
    s.sd = draws.size() > 1 ? sd_of(draws) : 0.0;
    std::vector<double> sorted(draws.begin(), draws.end());
    std::sort(sorted.begin(), sorted.end());
    s.lower = quantile_sorted(sorted, 0.025);
    s.upper = quantile_sorted(sorted, 0.975);
    return s;
}

}  // namespace crashcar
