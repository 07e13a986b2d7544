#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <tuple>
#include <variant>
#include <vector>

#include "aldous_pitman.hpp"
#include "datamodel.hpp"
#include "draws.hpp"
#include "errors.hpp"
#include "gibbs.hpp"
#include "sampling.hpp"
#include "specfun.hpp"

namespace biodiv {

/// Joint state (gamma, U) of the augmented Aldous-Pitman posterior for fixed (n, k).
struct APAugmentedState {
    double gamma = 1.0;
    double u = 1.0;
    std::uint64_t n = 2;
    std::uint64_t k = 1;
    double rho = 1.0;
    // Use u^(rho (2n - k) - 2) instead of u^(rho (2n - k - 2)).
    bool literal_exponent = false;

    double u_exponent() const {
        const double m = 2.0 * static_cast<double>(n) - static_cast<double>(k);
        return literal_exponent ? rho * m - 2.0 : rho * (m - 2.0);
    }

    void validate() const {
        detail::require(n >= 2, "AP augmented likelihood needs n >= 2");
        detail::require(k >= 1 && k <= n, "AP augmented likelihood needs 1 <= k <= n");
        detail::require(gamma > 0 && u > 0, "AP augmented state needs gamma > 0 and u > 0");
        detail::require(rho > 0 && rho <= 1, "AP augmented state: rho must lie in (0, 1]");
        detail::require(u_exponent() > -1.0, "AP augmented state: u exponent must exceed -1");
    }
};

struct GammaHyperprior {
    double shape = 1.0;
    double rate = 1.0;
};

/// Tempered log joint density of (gamma, U) and the partition, with gamma the sigma-diversity.
inline double log_augmented_likelihood(const APAugmentedState& s, const std::vector<Count>& abundances) {
    s.validate();
    detail::require(abundances.size() == s.k, "log_augmented_likelihood: abundances do not match k");
    detail::require(std::accumulate(abundances.begin(), abundances.end(), Count{0}) == s.n,
                    "log_augmented_likelihood: abundances do not match n");
    const double n = static_cast<double>(s.n), k = static_cast<double>(s.k);
    double blocks = 0.0;
    for (Count c : abundances) blocks += log_rising(0.5, static_cast<double>(c - 1));
    const double l = (n - 0.5 * k - 0.5) * std::numbers::ln2 - std::lgamma(2 * n - k - 1) + (k - 1) * std::log(0.5 * s.gamma) -
                     0.5 * s.u * s.u - s.gamma * s.u / std::numbers::sqrt2 + blocks;
    return s.rho * l + s.u_exponent() * std::log(s.u);
}

namespace detail {

// u^e exp(-c u^2 / 2 - d u) on (0, inf)
struct HalfNormalKernel {
    double e, c, d;
    double operator()(double u) const {
        if (u < 0) return neg_inf;
        if (u == 0) return e == 0 ? 0.0 : (e > 0 ? neg_inf : std::numeric_limits<double>::infinity());
        return e * std::log(u) - 0.5 * c * u * u - d * u;
    }
    double mode() const {
        if (e <= 0) return 0.0;
        return (-d + std::sqrt(d * d + 4 * c * e)) / (2 * c);
    }
    double scale() const {
        const double m = mode();
        return m > 0 ? 1.0 / std::sqrt(c + e / (m * m)) : 1.0 / std::sqrt(c + d * d);
    }
};

// For e in (-1, 0) the density is unbounded at 0; sample w = u^(1+e) instead.
struct PoweredHalfNormal {
    HalfNormalKernel f;
    double operator()(double w) const {
        if (!(w > 0)) return w == 0 ? 0.0 : neg_inf;
        const double u = std::pow(w, 1.0 / (1.0 + f.e));
        return -0.5 * f.c * u * u - f.d * u;
    }
};

inline double sample_half_normal(const HalfNormalKernel& f, Rng& rng) {
    if (f.e < 0) {
        const PoweredHalfNormal g{f};
        const double w = RatioOfUniforms<PoweredHalfNormal>(g, 0.0, 0.0, std::pow(f.scale(), 1.0 + f.e))(rng);
        return std::pow(w, 1.0 / (1.0 + f.e));
    }
    RatioOfUniforms<HalfNormalKernel> rou(f, 0.0, f.mode(), f.scale());
    return rou(rng);
}

// Marginal of U after integrating gamma against its Gamma prior:
// u^e exp(-c u^2/2) (b + c u / sqrt 2)^-(a + c (k - 1)), with c = rho.
struct TwoStepMarginal {
    double e, rho, b, shape;
    double operator()(double u) const {
        if (u < 0) return neg_inf;
        if (u == 0) return e == 0 ? -shape * std::log(b) : neg_inf;
        return e * std::log(u) - 0.5 * rho * u * u - shape * std::log(b + rho * u / std::numbers::sqrt2);
    }
    double slope(double u) const {
        return e / u - rho * u - shape * rho / std::numbers::sqrt2 / (b + rho * u / std::numbers::sqrt2);
    }
};

}  // namespace detail

/// One systematic-scan update: gamma | U, then U | gamma.
inline APAugmentedState gibbs_sweep(APAugmentedState s, const GammaHyperprior& prior, Rng& rng) {
    s.validate();
    const double k = static_cast<double>(s.k);
    s.gamma = gamma_draw(rng, prior.shape + s.rho * (k - 1), prior.rate + s.rho * s.u / std::numbers::sqrt2);
    const detail::HalfNormalKernel f{s.u_exponent(), s.rho, s.rho * s.gamma / std::numbers::sqrt2};
    s.u = detail::sample_half_normal(f, rng);
    if (!(s.u > 0)) s.u = std::numeric_limits<double>::min();
    return s;
}

/// Gibbs chain for gamma given (n, k); draws after burn-in, every `thin`-th sweep.
inline PosteriorDraws ap_gibbs_chain(std::uint64_t n, std::uint64_t k, const GammaHyperprior& prior, std::size_t n_draws,
                                     std::size_t burn_in, std::uint64_t seed, double rho = 1.0, std::size_t thin = 1) {
    APAugmentedState s{1.0, 1.0, n, k, rho};
    s.u = std::max(1.0, std::sqrt(2.0 * static_cast<double>(n)));
    s.validate();
    Rng rng = make_rng(seed);
    for (std::size_t i = 0; i < burn_in; ++i) s = gibbs_sweep(s, prior, rng);
    PosteriorDraws out;
    out.quantity = "gamma";
    out.rho = rho;
    out.values.resize(n_draws);
    for (auto& v : out.values) {
        for (std::size_t t = 0; t < std::max<std::size_t>(thin, 1); ++t) s = gibbs_sweep(s, prior, rng);
        v = s.gamma;
    }
    out.diagnostics = diagnose(out.values, thin, n_draws);
    return out;
}

/// Exact iid posterior draws of gamma under a Gamma prior: U from its marginal, then gamma | U.
inline PosteriorDraws iid_two_step_sample(std::uint64_t n, std::uint64_t k, double a, double b, std::size_t n_draws,
                                          std::uint64_t seed, double rho = 1.0) {
    detail::require(n >= 2 && k >= 1 && k <= n, "iid_two_step_sample: need n >= 2 and 1 <= k <= n");
    detail::require(a > 0 && b > 0, "iid_two_step_sample: prior shape and rate must be positive");
    detail::require(rho > 0 && rho <= 1, "iid_two_step_sample: rho must lie in (0, 1]");
    const double kd = static_cast<double>(k);
    const double shape = a + rho * (kd - 1);
    const detail::TwoStepMarginal f{rho * (2.0 * static_cast<double>(n) - kd - 2), rho, b, shape};
    double mode = 0.0;
    if (f.e > 0) {
        double lo = 0.0, hi = 1.0;
        while (f.slope(hi) > 0) {
            lo = hi;
            hi *= 2;
        }
        for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
            const double mid = 0.5 * (lo + hi);
            (f.slope(mid) > 0 ? lo : hi) = mid;
        }
        mode = 0.5 * (lo + hi);
    }
    const double m = std::max(mode, 1e-3);
    const double scale = 1.0 / std::sqrt(rho + f.e / (m * m));
    RatioOfUniforms<detail::TwoStepMarginal> rou(f, 0.0, mode, scale);
    Rng rng = make_rng(seed);
    PosteriorDraws out;
    out.quantity = "gamma";
    out.rho = rho;
    out.values.resize(n_draws);
    for (auto& v : out.values) {
        const double u = rou(rng);
        v = gamma_draw(rng, shape, b + rho * u / std::numbers::sqrt2);
    }
    out.diagnostics = diagnose(out.values, 1, n_draws);
    return out;
}

/// Outcome of one predictive step: a new taxon, or the index of an observed one.
struct APPrediction {
    bool is_new = false;
    std::size_t taxon = 0;
};

/// Next observation given the abundances, via the latent predictive sampler;
/// an observed taxon j is chosen with weight n_j - 1/2.
inline APPrediction ap_predictive_sample(double gamma, const std::vector<Count>& abundances, Rng& rng) {
    detail::require(!abundances.empty(), "ap_predictive_sample: no observations");
    const Count n = std::accumulate(abundances.begin(), abundances.end(), Count{0});
    const APLatentPredictive step(gamma, n, abundances.size());
    if (step.sample_new(rng)) return {true, abundances.size()};
    double target = uniform_open(rng) * (static_cast<double>(n) - 0.5 * static_cast<double>(abundances.size()));
    for (std::size_t j = 0; j < abundances.size(); ++j) {
        target -= static_cast<double>(abundances[j]) - 0.5;
        if (target < 0) return {false, j};
    }
    return {false, abundances.size() - 1};
}

struct PitmanYorPrior {
    double theta = 0.0;
};

struct InverseGaussianPrior {
    double beta = 1.0;
};

using APDiversityPrior = std::variant<PitmanYorPrior, InverseGaussianPrior>;

/// Log density of the sigma-diversity induced by a Pitman-Yor or normalized inverse Gaussian process.
inline double py_ig_log_density(double gamma, const APDiversityPrior& prior) {
    if (!(gamma > 0)) return neg_inf;
    if (const auto* py = std::get_if<PitmanYorPrior>(&prior)) {
        detail::require(py->theta > -0.5, "Pitman-Yor prior: theta must exceed -1/2");
        return -py->theta * std::log(4.0) - std::lgamma(py->theta + 0.5) + 2 * py->theta * std::log(gamma) - 0.25 * gamma * gamma;
    }
    const double beta = std::get<InverseGaussianPrior>(prior).beta;
    detail::require(beta > 0, "inverse Gaussian prior: beta must be positive");
    return -0.5 * std::log(std::numbers::pi) + beta - beta * beta / (gamma * gamma) - 0.25 * gamma * gamma;
}

inline double py_ig_prior_density(double gamma, const APDiversityPrior& prior) {
    return std::exp(py_ig_log_density(gamma, prior));
}

/// Posterior draws of gamma under a Pitman-Yor or inverse Gaussian prior, by slice sampling on log gamma.
inline PosteriorDraws ap_posterior_sample(std::uint64_t n, std::uint64_t k, const APDiversityPrior& prior,
                                          std::size_t n_draws, std::uint64_t seed, double rho = 1.0) {
    detail::check_nk(n, k);
    detail::require(rho > 0 && rho <= 1, "ap_posterior_sample: rho must lie in (0, 1]");
    auto logf = [&](double x) {
        const double g = std::exp(x);
        return py_ig_log_density(g, prior) + rho * log_V(GibbsModel::ap(g), n, k) + x;
    };
    const double mode = detail::golden_max(logf, -20.0, 12.0, 300);
    const double h = 1e-3;
    const double curv = (logf(mode + h) - 2 * logf(mode) + logf(mode - h)) / (h * h);
    const double width = std::min(curv < 0 ? 2.5 / std::sqrt(-curv) : 2.5, 20.0);
    Rng rng = make_rng(seed);
    double x = mode, lx = logf(x);
    auto step = [&] { std::tie(x, lx) = slice_update(logf, x, lx, width, rng); };
    for (int i = 0; i < 100; ++i) step();
    std::vector<double> pilot(500);
    for (auto& v : pilot) {
        step();
        v = x;
    }
    const double r = autocorrelation(pilot, 1);
    std::size_t thin = 1;
    if (r > 0.05) thin = static_cast<std::size_t>(std::ceil(std::log(0.05) / std::log(std::min(r, 0.999))));
    PosteriorDraws out;
    out.quantity = "gamma";
    out.rho = rho;
    out.values.resize(n_draws);
    std::vector<double> trace(n_draws);
    for (std::size_t i = 0; i < n_draws; ++i) {
        for (std::size_t t = 0; t < thin; ++t) step();
        trace[i] = x;
        out.values[i] = std::exp(x);
    }
    out.diagnostics = diagnose(trace, thin, n_draws);
    return out;
}

}  // namespace biodiv
