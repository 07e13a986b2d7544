#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include <boost/math/distributions/poisson.hpp>

#include "draws.hpp"
#include "errors.hpp"
#include "estimators.hpp"
#include "sampling.hpp"
#include "specfun.hpp"

namespace biodiv {

/// Stirling-gamma law SG(a, b, m): density proportional to alpha^(a-1) / ((alpha)_m)^b.
struct StirlingGammaSpec {
    double a = 1.0;
    double b = 0.0002;
    std::uint64_t n_ref = 1;

    void validate() const {
        detail::require(a > 0 && b > 0 && std::isfinite(a) && std::isfinite(b), "Stirling-gamma: a and b must be positive");
        detail::require(n_ref >= 1, "Stirling-gamma: n_ref must be >= 1");
        const double loc = a / b;
        detail::require(loc >= 1.0 && loc <= static_cast<double>(n_ref), "Stirling-gamma: need 1 <= a/b <= n_ref");
    }
};

/// Gamma(shape, rate) prior on alpha.
struct GammaAlphaPrior {
    double shape = 1.0;
    double rate = 1.0;
};

using AlphaPrior = std::variant<StirlingGammaSpec, GammaAlphaPrior>;

/// Prior times the rho-tempered DP partition likelihood (alpha^k / (alpha)_n)^rho.
struct CoarsenedPosterior {
    AlphaPrior prior = StirlingGammaSpec{};
    std::uint64_t n = 1;
    std::uint64_t k = 1;
    double rho = 1.0;

    void validate() const {
        detail::require(n >= 1 && k >= 1 && k <= n, "coarsened posterior: need 1 <= k <= n");
        detail::require(rho > 0 && rho <= 1, "coarsened posterior: rho must lie in (0, 1]");
        if (const auto* sg = std::get_if<StirlingGammaSpec>(&prior)) sg->validate();
        else {
            const auto& g = std::get<GammaAlphaPrior>(prior);
            detail::require(g.shape > 0 && g.rate > 0, "gamma prior: shape and rate must be positive");
        }
    }

    /// Unnormalized log density in alpha.
    double log_kernel(double alpha) const {
        if (!(alpha > 0)) return neg_inf;
        const double la = std::log(alpha);
        const double nd = static_cast<double>(n), kd = static_cast<double>(k);
        if (const auto* sg = std::get_if<StirlingGammaSpec>(&prior)) {
            if (sg->n_ref == n) return (sg->a + rho * kd - 1) * la - (sg->b + rho) * log_rising(alpha, nd);
            return (sg->a + rho * kd - 1) * la - sg->b * log_rising(alpha, static_cast<double>(sg->n_ref)) -
                   rho * log_rising(alpha, nd);
        }
        const auto& g = std::get<GammaAlphaPrior>(prior);
        return (g.shape + rho * kd - 1) * la - g.rate * alpha - rho * log_rising(alpha, nd);
    }
};

namespace detail {

inline double log_alpha_mode(const CoarsenedPosterior& post) {
    auto f = [&](double x) { return post.log_kernel(std::exp(x)) + x; };
    return golden_max(f, -40.0, 45.0, 400);
}

}  // namespace detail

/// Draws of alpha from a coarsened posterior by slice sampling on log alpha,
/// started at the ML estimate and thinned until lag-1 autocorrelation is below 0.05.
inline PosteriorDraws sg_posterior_sample(const CoarsenedPosterior& post, std::size_t n_draws, std::uint64_t seed) {
    post.validate();
    detail::require(n_draws >= 1, "sg_posterior_sample: n_draws must be >= 1");
    auto logf = [&](double x) { return post.log_kernel(std::exp(x)) + x; };

    const double mode = detail::log_alpha_mode(post);
    double x = mode;
    if (post.k > 1 && post.k < post.n) x = std::log(mle_alpha(post.n, post.k).value);
    if (!std::isfinite(logf(x))) x = mode;

    const double h = 1e-3;
    const double curv = (logf(mode + h) - 2 * logf(mode) + logf(mode - h)) / (h * h);
    const double sd = curv < 0 ? 1.0 / std::sqrt(-curv) : 1.0;
    const double width = std::min(2.5 * sd, 50.0);

    Rng rng = make_rng(seed);
    double lx = logf(x);
    auto step = [&] { std::tie(x, lx) = slice_update(logf, x, lx, width, rng); };

    for (int i = 0; i < 200; ++i) step();
    std::vector<double> pilot(2000);
    for (auto& v : pilot) {
        step();
        v = x;
    }
    const double r = autocorrelation(pilot, 1);
    std::size_t thin = 1;
    if (r > 0.05) thin = static_cast<std::size_t>(std::ceil(std::log(0.05) / std::log(std::min(r, 0.999))));

    PosteriorDraws out;
    out.quantity = "alpha";
    out.rho = post.rho;
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

/// Posterior predictive draws of the population richness K_N.
struct RichnessPrediction {
    std::vector<std::uint64_t> draws;  // K_N
    std::vector<std::uint64_t> population;  // N
    std::vector<double> alpha;
    double N_hat = 0.0;
    double n_spread = 0.5;
    std::uint64_t n = 0;
    std::uint64_t k = 0;
    double rho = 1.0;
    SamplerDiagnostics diagnostics;

    std::vector<double> values() const { return {draws.begin(), draws.end()}; }
};

/// Expected number of new taxa between sizes n and N under DP(alpha).
inline double richness_poisson_mean(double alpha, std::uint64_t n, std::uint64_t N) {
    if (N <= n) return 0.0;
    return alpha * digamma_diff(alpha + static_cast<double>(n), static_cast<double>(N - n));
}

/// Poisson draw by inversion, so draws are monotone in the mean for a fixed uniform.
inline std::uint64_t poisson_inverse(double mean, double u) {
    if (!(mean > 0)) return 0;
    using namespace boost::math::policies;
    using Policy = policy<discrete_quantile<integer_round_up>>;
    return static_cast<std::uint64_t>(boost::math::quantile(boost::math::poisson_distribution<double, Policy>(mean), u));
}

/// K_N = k + Poisson(alpha (psi(alpha + N) - psi(alpha + n))) with
/// N ~ Uniform((1 - s) N_hat, (1 + s) N_hat) rounded and kept >= n.
inline RichnessPrediction richness_posterior(const CoarsenedPosterior& post, double N_hat, std::size_t n_draws,
                                             std::uint64_t seed, double n_spread = 0.5) {
    detail::require(N_hat >= static_cast<double>(post.n), "richness_posterior: N_hat must be >= n");
    detail::require(n_spread >= 0 && n_spread < 1, "richness_posterior: spread must lie in [0, 1)");
    const auto alpha = sg_posterior_sample(post, n_draws, seed);
    RichnessPrediction out;
    out.N_hat = N_hat;
    out.n_spread = n_spread;
    out.n = post.n;
    out.k = post.k;
    out.rho = post.rho;
    out.alpha = alpha.values;
    out.diagnostics = alpha.diagnostics;
    out.draws.resize(n_draws);
    out.population.resize(n_draws);
    Rng rng = make_rng(seed, 1);
    for (std::size_t i = 0; i < n_draws; ++i) {
        const double u_pop = uniform_open(rng);
        const double u_count = uniform_open(rng);
        const double Nd = std::round(N_hat * (1 - n_spread + 2 * n_spread * u_pop));
        const auto N = std::max<std::uint64_t>(post.n, static_cast<std::uint64_t>(Nd));
        out.population[i] = N;
        out.draws[i] = post.k + poisson_inverse(richness_poisson_mean(alpha.values[i], post.n, N), u_count);
    }
    return out;
}

struct DiversityTransforms {
    double simpson_mean = 0.0;
    double shannon_mean = 0.0;
};

/// Posterior means of 1/(1+alpha) and psi(alpha+1) - psi(1).
inline DiversityTransforms diversity_transforms(const std::vector<double>& alpha_draws) {
    detail::require(!alpha_draws.empty(), "diversity_transforms: no draws");
    DiversityTransforms d;
    for (double a : alpha_draws) {
        detail::require(a >= 0, "diversity_transforms: negative alpha");
        d.simpson_mean += 1.0 / (1.0 + a);
        d.shannon_mean += digamma(a + 1) - digamma(1.0);
    }
    d.simpson_mean /= static_cast<double>(alpha_draws.size());
    d.shannon_mean /= static_cast<double>(alpha_draws.size());
    return d;
}

struct CalibrationPoint {
    double rho = 1.0;
    double expected_log_likelihood = 0.0;
};

/// Posterior expectation of k log(alpha) - log (alpha)_n for each coarsening level.
inline std::vector<CalibrationPoint> calibration_curve(const AlphaPrior& prior, std::uint64_t n, std::uint64_t k,
                                                       const std::vector<double>& rho_grid, std::size_t n_draws = 4000,
                                                       std::uint64_t seed = 1) {
    std::vector<CalibrationPoint> out;
    out.reserve(rho_grid.size());
    for (std::size_t i = 0; i < rho_grid.size(); ++i) {
        const CoarsenedPosterior post{prior, n, k, rho_grid[i]};
        const auto draws = sg_posterior_sample(post, n_draws, seed + i);
        double s = 0.0;
        for (double a : draws.values) s += static_cast<double>(k) * std::log(a) - log_rising(a, static_cast<double>(n));
        out.push_back({rho_grid[i], s / static_cast<double>(n_draws)});
    }
    return out;
}

}  // namespace biodiv
