#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "errors.hpp"

namespace biodiv {

struct SamplerDiagnostics {
    double lag1_autocorrelation = 0.0;
    double effective_sample_size = 0.0;
    std::size_t thin = 1;
    bool converged = true;
};

/// Labeled draws from a diversity posterior, with the coarsening level used.
struct PosteriorDraws {
    std::string quantity;
    std::vector<double> values;
    double rho = 1.0;
    SamplerDiagnostics diagnostics;
};

inline constexpr std::array<double, 5> summary_levels{0.01, 0.25, 0.50, 0.75, 0.99};

struct Summary {
    double mean = 0.0;
    std::array<double, 5> quantiles{};  // at summary_levels
};

inline double mean_of(const std::vector<double>& x) {
    if (x.empty()) throw domain_error("mean of empty sample");
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Sample quantile with linear interpolation between order statistics.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw domain_error("quantile of empty sample");
    const double h = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::vector<double> x, double p) {
    std::sort(x.begin(), x.end());
    return quantile_sorted(x, p);
}

inline Summary summarize(const std::vector<double>& x) {
    Summary s;
    s.mean = mean_of(x);
    std::vector<double> sorted(x);
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < summary_levels.size(); ++i) s.quantiles[i] = quantile_sorted(sorted, summary_levels[i]);
    return s;
}

inline double autocorrelation(const std::vector<double>& x, std::size_t lag) {
    const std::size_t n = x.size();
    if (n < lag + 2) return 0.0;
    const double m = mean_of(x);
    double c0 = 0.0, cl = 0.0;
    for (std::size_t i = 0; i < n; ++i) c0 += (x[i] - m) * (x[i] - m);
    for (std::size_t i = 0; i + lag < n; ++i) cl += (x[i] - m) * (x[i + lag] - m);
    return c0 > 0 ? cl / c0 : 0.0;
}

/// Effective sample size from Geyer's initial monotone sequence estimator.
inline double effective_sample_size(const std::vector<double>& x) {
    const std::size_t n = x.size();
    if (n < 4) return static_cast<double>(n);
    const double m = mean_of(x);
    double c0 = 0.0;
    for (double v : x) c0 += (v - m) * (v - m);
    if (c0 <= 0) return static_cast<double>(n);
    auto rho = [&](std::size_t lag) {
        double c = 0.0;
        for (std::size_t i = 0; i + lag < n; ++i) c += (x[i] - m) * (x[i + lag] - m);
        return c / c0;
    };
    double tau = -1.0;
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t lag = 0; lag + 1 < n; lag += 2) {
        double pair = rho(lag) + rho(lag + 1);
        if (pair <= 0) break;
        pair = std::min(pair, prev);
        prev = pair;
        tau += 2.0 * pair;
    }
    tau = std::max(tau, 1.0 / static_cast<double>(n));
    return static_cast<double>(n) / tau;
}

inline SamplerDiagnostics diagnose(const std::vector<double>& x, std::size_t thin, std::size_t wanted) {
    SamplerDiagnostics d;
    d.thin = thin;
    d.lag1_autocorrelation = autocorrelation(x, 1);
    d.effective_sample_size = effective_sample_size(x);
    d.converged = d.effective_sample_size >= static_cast<double>(wanted) / 10.0;
    return d;
}

}  // namespace biodiv
