#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <utility>

#include "errors.hpp"

namespace biodiv {

using Rng = std::mt19937_64;

/// Independent generator for (seed, stream id); used for per-chain and per-branch streams.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      0x9e3779b9u};
    return Rng(seq);
}

/// Uniform draw on the open interval (0, 1).
inline double uniform_open(Rng& rng) {
    for (;;) {
        const double u = std::generate_canonical<double, 53>(rng);
        if (u > 0.0 && u < 1.0) return u;
    }
}

inline double gamma_draw(Rng& rng, double shape, double rate) {
    return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

namespace detail {

inline constexpr double golden = 0.6180339887498949;

// Maximize a unimodal f on [a, b].
template <class F>
double golden_max(F&& f, double a, double b, int iters = 200) {
    double c = b - golden * (b - a), d = a + golden * (b - a);
    double fc = f(c), fd = f(d);
    for (int i = 0; i < iters && (b - a) > 1e-13 * (std::fabs(a) + std::fabs(b)); ++i) {
        if (fc < fd) {
            a = c;
            c = d;
            fc = fd;
            d = a + golden * (b - a);
            fd = f(d);
        } else {
            b = d;
            d = c;
            fd = fc;
            c = b - golden * (b - a);
            fc = f(c);
        }
    }
    return fc > fd ? c : d;
}

// Maximize a unimodal f on (0, cap) starting from a length scale.
template <class F>
double bracket_max(F&& f, double scale, double cap) {
    double v = std::min(scale, 0.5 * cap);
    double fv = f(v);
    for (int i = 0; i < 2000 && 2 * v < cap; ++i) {
        const double f2 = f(2 * v);
        if (!(f2 > fv)) break;
        v *= 2;
        fv = f2;
    }
    for (int i = 0; i < 2000 && v > 1e-300; ++i) {
        const double fh = f(0.5 * v);
        if (!(fh > fv)) break;
        v *= 0.5;
        fv = fh;
    }
    return golden_max(f, 0.5 * v, std::min(2 * v, cap));
}

}  // namespace detail

/// Mode of a unimodal log-density on (lower, inf).
template <class LogDensity>
double locate_mode(const LogDensity& logf, double lower, double start, double scale) {
    auto shifted = [&](double v) { return logf(lower + v); };
    const double guess = std::max(start - lower, scale);
    return lower + detail::bracket_max(shifted, guess, std::numeric_limits<double>::max() / 4);
}

/// Ratio-of-uniforms sampler for a unimodal density on (lower, inf), with the
/// enclosing box computed numerically around the mode.
template <class LogDensity>
class RatioOfUniforms {
public:
    static constexpr int max_tries = 100000;

    RatioOfUniforms(LogDensity logf, double lower, double mode, double scale)
        : logf_(std::move(logf)), lower_(lower), mode_(mode), lmode_(logf_(mode)) {
        if (!std::isfinite(lmode_)) throw domain_error("ratio-of-uniforms: density not finite at mode");
        auto right = [&](double v) { return std::log(v) + 0.5 * (logf_(mode_ + v) - lmode_); };
        const double vr = detail::bracket_max(right, scale, std::numeric_limits<double>::max() / 4);
        y_hi_ = std::exp(right(vr)) * (1 + 1e-7);
        if (mode_ - lower_ > 0) {
            auto left = [&](double v) { return std::log(v) + 0.5 * (logf_(mode_ - v) - lmode_); };
            const double cap = mode_ - lower_;
            const double vl = detail::bracket_max(left, std::min(scale, 0.5 * cap), cap);
            y_lo_ = -std::max(std::exp(left(vl)), std::exp(left(cap * (1 - 1e-12)))) * (1 + 1e-7);
            if (!std::isfinite(y_lo_)) y_lo_ = -cap;
        }
    }

    double mode() const { return mode_; }

    double operator()(Rng& rng) const {
        for (int i = 0; i < max_tries; ++i) {
            const double x = uniform_open(rng);
            const double y = y_lo_ + (y_hi_ - y_lo_) * uniform_open(rng);
            const double u = mode_ + y / x;
            if (!(u > lower_)) continue;
            if (2.0 * std::log(x) <= logf_(u) - lmode_) return u;
        }
        throw rejection_loop_exceeded("ratio-of-uniforms: rejection loop exceeded");
    }

private:
    LogDensity logf_;
    double lower_;
    double mode_;
    double lmode_;
    double y_lo_ = 0.0;
    double y_hi_ = 0.0;
};

/// One univariate slice-sampling update (stepping out, then shrinkage).
template <class LogDensity>
std::pair<double, double> slice_update(const LogDensity& logf, double x, double lx, double width, Rng& rng,
                                       int max_steps = 64) {
    const double level = lx + std::log(uniform_open(rng));
    double left = x - width * uniform_open(rng);
    double right = left + width;
    int j = static_cast<int>(max_steps * uniform_open(rng));
    int k = max_steps - 1 - j;
    while (j-- > 0 && logf(left) > level) left -= width;
    while (k-- > 0 && logf(right) > level) right += width;
    for (int i = 0; i < 10000; ++i) {
        const double cand = left + (right - left) * uniform_open(rng);
        const double lc = logf(cand);
        if (lc > level) return {cand, lc};
        (cand < x ? left : right) = cand;
    }
    throw convergence_error("slice sampler: shrinkage did not terminate");
}

}  // namespace biodiv
