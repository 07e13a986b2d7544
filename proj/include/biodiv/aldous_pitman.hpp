#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "sampling.hpp"

namespace biodiv {

/// Truncated constructive weights: R_0 = 1, R_h = (g^2/2) / (g^2/2 + Y_1^2 + ... + Y_h^2).
struct APWeights {
    std::vector<double> residuals;  // R_0..R_H
    std::vector<double> weights;    // pi_1..pi_H
    double tail() const { return residuals.back(); }
};

inline APWeights ap_stick_sample(double gamma, std::size_t h_trunc, Rng& rng) {
    if (!(gamma > 0)) throw domain_error("ap_stick_sample: gamma must be positive");
    if (h_trunc < 1) throw domain_error("ap_stick_sample: truncation must be at least 1");
    APWeights w;
    w.residuals.reserve(h_trunc + 1);
    w.weights.reserve(h_trunc);
    w.residuals.push_back(1.0);
    std::normal_distribution<double> z;
    const double c = 0.5 * gamma * gamma;
    double s = 0.0;
    for (std::size_t h = 1; h <= h_trunc; ++h) {
        const double y = z(rng);
        s += y * y;
        const double r = c / (c + s);
        w.weights.push_back(w.residuals.back() - r);
        w.residuals.push_back(r);
    }
    return w;
}

inline APWeights ap_stick_sample(double gamma, std::size_t h_trunc, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    return ap_stick_sample(gamma, h_trunc, rng);
}

namespace detail {

// Log-density of the latent variable in the predictive step:
// u^{2n-k-1} (t + u) exp(-u^2/2 - t u), t = gamma / sqrt 2.
struct LatentPredictiveDensity {
    double a;
    double t;
    double operator()(double u) const {
        if (!(u > 0)) return a == 0 ? std::log(t) : neg_inf_value();
        return a * std::log(u) + std::log(t + u) - 0.5 * u * u - t * u;
    }
    double slope(double u) const { return a / u + 1.0 / (t + u) - u - t; }
    static double neg_inf_value() { return -std::numeric_limits<double>::infinity(); }
};

inline double latent_mode(const LatentPredictiveDensity& f) {
    if (f.a == 0 && f.slope(1e-300) <= 0) return 0.0;
    double lo = 0.0, hi = 1.0;
    while (f.slope(hi) > 0) {
        lo = hi;
        hi *= 2;
    }
    for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        (f.slope(mid) > 0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace detail

/// Latent sampler for the Aldous-Pitman predictive step at fixed (gamma, n, k).
///
/// Draws U from u^{2n-k-1} (t + u) exp(-u^2/2 - t u) and then declares a new
/// taxon with probability t / (t + U). Marginally P(new) = t h_{k-2n}(t) / h_{k+1-2n}(t).
class APLatentPredictive {
public:
    APLatentPredictive(double gamma, std::uint64_t n, std::uint64_t k)
        : f_(density(gamma, n, k)), rou_(f_, 0.0, detail::latent_mode(f_), scale()) {}

    double t() const { return f_.t; }
    double sample_u(Rng& rng) const { return rou_(rng); }

    /// One predictive step; true when the next observation is a new taxon.
    bool sample_new(Rng& rng) const {
        const double u = rou_(rng);
        return uniform_open(rng) * (f_.t + u) < f_.t;
    }

private:
    static detail::LatentPredictiveDensity density(double gamma, std::uint64_t n, std::uint64_t k) {
        if (!(gamma > 0)) throw domain_error("AP predictive: gamma must be positive");
        if (n < 1 || k < 1 || k > n) throw domain_error("AP predictive: need 1 <= k <= n");
        return {static_cast<double>(2 * n) - static_cast<double>(k) - 1.0, gamma / std::numbers::sqrt2};
    }

    double scale() const {
        const double m = detail::latent_mode(f_);
        const double u = std::max(m, 1e-3);
        return 1.0 / std::sqrt(f_.a / (u * u) + 1.0 / ((f_.t + u) * (f_.t + u)) + 1.0);
    }

    detail::LatentPredictiveDensity f_;
    RatioOfUniforms<detail::LatentPredictiveDensity> rou_;
};

/// Memoized latent samplers keyed by (n, k) at a fixed gamma.
class APLatentCache {
public:
    explicit APLatentCache(double gamma) : gamma_(gamma) {}

    const APLatentPredictive& at(std::uint64_t n, std::uint64_t k) {
        auto it = cache_.find({n, k});
        if (it == cache_.end()) it = cache_.emplace(std::pair{n, k}, APLatentPredictive(gamma_, n, k)).first;
        return it->second;
    }

    /// Distinct-count increment for one step from (n, k); the first observation is always new.
    bool step_new(std::uint64_t n, std::uint64_t k, Rng& rng) {
        if (n == 0) return true;
        return at(n, k).sample_new(rng);
    }

private:
    double gamma_;
    std::map<std::pair<std::uint64_t, std::uint64_t>, APLatentPredictive> cache_;
};

}  // namespace biodiv
