#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "biodiv/dpinfer.hpp"
#include "biodiv/gibbs.hpp"

using namespace biodiv;

namespace {

constexpr std::uint64_t amazon_n = 553949, amazon_k = 4962;

// Quantiles of the kernel by trapezoid integration over a fine log-alpha grid.
std::vector<double> grid_quantiles(const CoarsenedPosterior& post, const std::vector<double>& probs, double lo = -25,
                                   double hi = 30, int nodes = 400000) {
    std::vector<double> x(nodes), lf(nodes);
    double top = neg_inf;
    for (int i = 0; i < nodes; ++i) {
        x[i] = lo + (hi - lo) * i / (nodes - 1);
        lf[i] = post.log_kernel(std::exp(x[i])) + x[i];
        top = std::max(top, lf[i]);
    }
    std::vector<double> cdf(nodes, 0.0);
    for (int i = 1; i < nodes; ++i)
        cdf[i] = cdf[i - 1] + 0.5 * (std::exp(lf[i] - top) + std::exp(lf[i - 1] - top)) * (x[i] - x[i - 1]);
    std::vector<double> out;
    for (double p : probs) {
        const double target = p * cdf.back();
        const auto it = std::lower_bound(cdf.begin(), cdf.end(), target);
        const auto j = static_cast<std::size_t>(it - cdf.begin());
        const double w = (target - cdf[j - 1]) / (cdf[j] - cdf[j - 1]);
        out.push_back(std::exp(x[j - 1] + w * (x[j] - x[j - 1])));
    }
    return out;
}

std::vector<double> sample_quantiles(std::vector<double> v, const std::vector<double>& probs) {
    std::sort(v.begin(), v.end());
    std::vector<double> out;
    for (double p : probs) out.push_back(quantile_sorted(v, p));
    return out;
}

const std::vector<double> probs{0.05, 0.25, 0.5, 0.75, 0.95};

CoarsenedPosterior amazon(double rho) { return {StirlingGammaSpec{1.0, 0.0002, amazon_n}, amazon_n, amazon_k, rho}; }

}  // namespace

TEST(StirlingGamma, Validation) {
    EXPECT_NO_THROW((StirlingGammaSpec{1, 0.0002, amazon_n}.validate()));
    EXPECT_THROW((StirlingGammaSpec{1, 2, 10}.validate()), domain_error);
    EXPECT_THROW((StirlingGammaSpec{100, 1, 10}.validate()), domain_error);
    EXPECT_THROW((StirlingGammaSpec{0, 1, 10}.validate()), domain_error);
    CoarsenedPosterior bad{StirlingGammaSpec{1, 0.1, 50}, 50, 10, 0.0};
    EXPECT_THROW(sg_posterior_sample(bad, 10, 1), domain_error);
    bad.rho = 1.5;
    EXPECT_THROW(sg_posterior_sample(bad, 10, 1), domain_error);
}

TEST(SliceSampler, MatchesGridQuantiles) {
    const CoarsenedPosterior post{StirlingGammaSpec{1.0, 0.1, 50}, 50, 10, 1.0};
    const auto draws = sg_posterior_sample(post, 40000, 17);
    const auto got = sample_quantiles(draws.values, probs);
    const auto want = grid_quantiles(post, probs);
    for (std::size_t i = 0; i < probs.size(); ++i) EXPECT_LT(std::fabs(got[i] / want[i] - 1), 0.01) << probs[i];
    EXPECT_TRUE(draws.diagnostics.converged);
    EXPECT_LT(draws.diagnostics.lag1_autocorrelation, 0.05 + 3 / std::sqrt(40000.0));
}

TEST(SliceSampler, GammaPriorAndSeparateReferenceSize) {
    for (const CoarsenedPosterior& post : {CoarsenedPosterior{GammaAlphaPrior{2.0, 0.5}, 40, 12, 0.5},
                                           CoarsenedPosterior{StirlingGammaSpec{3.0, 1.0, 100}, 40, 12, 1.0}}) {
        const auto got = sample_quantiles(sg_posterior_sample(post, 40000, 3).values, probs);
        const auto want = grid_quantiles(post, probs);
        for (std::size_t i = 0; i < probs.size(); ++i) EXPECT_LT(std::fabs(got[i] / want[i] - 1), 0.015) << probs[i];
    }
}

TEST(SliceSampler, TemperingToPrior) {
    const CoarsenedPosterior post{StirlingGammaSpec{2.0, 0.1, 50}, 50, 10, 1e-9};
    CoarsenedPosterior prior_only = post;
    prior_only.k = 1;
    prior_only.rho = 1e-300;
    const auto got = sample_quantiles(sg_posterior_sample(post, 40000, 5).values, probs);
    const auto want = grid_quantiles(prior_only, probs);
    for (std::size_t i = 0; i < probs.size(); ++i) EXPECT_LT(std::fabs(got[i] / want[i] - 1), 0.03) << probs[i];
}

TEST(SliceSampler, Deterministic) {
    const CoarsenedPosterior post{StirlingGammaSpec{1.0, 0.1, 50}, 50, 10, 1.0};
    EXPECT_EQ(sg_posterior_sample(post, 500, 9).values, sg_posterior_sample(post, 500, 9).values);
    EXPECT_NE(sg_posterior_sample(post, 500, 9).values, sg_posterior_sample(post, 500, 10).values);
}

TEST(SliceSampler, EdgeStatistics) {
    const CoarsenedPosterior all_distinct{StirlingGammaSpec{1.0, 0.1, 20}, 20, 20, 1.0};
    const auto d = sg_posterior_sample(all_distinct, 200000, 2);
    const auto want = grid_quantiles(all_distinct, probs);
    const auto got = sample_quantiles(d.values, probs);
    for (std::size_t i = 0; i < probs.size(); ++i) EXPECT_LT(std::fabs(got[i] / want[i] - 1), 0.03) << probs[i];
    const CoarsenedPosterior single{StirlingGammaSpec{1.0, 0.1, 20}, 20, 1, 1.0};
    for (double a : sg_posterior_sample(single, 1000, 2).values) EXPECT_GT(a, 0.0);
}

TEST(SliceSampler, AmazonAgainstGrid) {
    for (double rho : {1.0, 0.01}) {
        const auto post = amazon(rho);
        const auto got = sample_quantiles(sg_posterior_sample(post, 100000, 4).values, probs);
        const auto want = grid_quantiles(post, probs, 4, 9, 200000);
        for (std::size_t i = 0; i < probs.size(); ++i) EXPECT_LT(std::fabs(got[i] / want[i] - 1), 0.01) << rho << ' ' << probs[i];
    }
}

TEST(SliceSampler, AmazonTableValues) {
    const auto s1 = summarize(sg_posterior_sample(amazon(1.0), 100000, 1).values);
    EXPECT_NEAR(s1.quantiles[2], 751, 2);
    EXPECT_NEAR(s1.quantiles[0], 725, 3);
    EXPECT_NEAR(s1.quantiles[4], 779, 3);
    const auto s2 = summarize(sg_posterior_sample(amazon(0.01), 100000, 1).values);
    EXPECT_NEAR(s2.quantiles[0], 514, 0.02 * 514);
    EXPECT_NEAR(s2.quantiles[4], 1048, 0.02 * 1048);
}

TEST(Richness, PointMassAndLowerBound) {
    const CoarsenedPosterior post{StirlingGammaSpec{1.0, 0.1, 50}, 50, 10, 1.0};
    const auto fixed = richness_posterior(post, 50, 200, 3, 0.0);
    for (auto v : fixed.draws) EXPECT_EQ(v, 10u);
    const auto r = richness_posterior(post, 5000, 2000, 3);
    for (auto v : r.draws) EXPECT_GE(v, 10u);
    for (auto N : r.population) {
        EXPECT_GE(N, 2500u);
        EXPECT_LE(N, 7500u);
    }
    EXPECT_THROW(richness_posterior(post, 10, 10, 1), domain_error);
}

TEST(Richness, CoupledMonotoneInPopulationSize) {
    const CoarsenedPosterior post{StirlingGammaSpec{1.0, 0.1, 50}, 50, 10, 1.0};
    const auto small = richness_posterior(post, 1e4, 3000, 21);
    const auto large = richness_posterior(post, 1e6, 3000, 21);
    for (std::size_t i = 0; i < small.draws.size(); ++i) EXPECT_LE(small.draws[i], large.draws[i]);
    EXPECT_EQ(small.alpha, large.alpha);
}

TEST(Richness, PoissonMeanIsExactSum) {
    for (double alpha : {0.5, 5.0, 300.0}) {
        double s = 0;
        for (int i = 1; i <= 10000; ++i) s += alpha / (alpha + 100 + i - 1);
        EXPECT_NEAR(richness_poisson_mean(alpha, 100, 10100), s, 1e-10 * s);
    }
    EXPECT_EQ(richness_poisson_mean(3.0, 100, 100), 0.0);
}

TEST(Richness, PoissonApproximationFidelity) {
    const double mu = richness_poisson_mean(5.0, 100, 600);
    const auto exact = posterior_Km_pmf(GibbsModel::dp(5.0), 100, 20, 500);
    double tv = 0, covered = 0;
    for (std::size_t j = 0; j < exact.size(); ++j) {
        const double p = std::exp(j * std::log(mu) - mu - std::lgamma(j + 1.0));
        tv += 0.5 * std::fabs(exact[j] - p);
        covered += p;
    }
    tv += 0.5 * (1 - covered);
    EXPECT_LT(tv, 0.02);
}

TEST(Richness, InverseCdfDraws) {
    EXPECT_EQ(poisson_inverse(0.0, 0.5), 0u);
    Rng rng = make_rng(6);
    double s = 0;
    const int reps = 200000;
    for (int i = 0; i < reps; ++i) s += static_cast<double>(poisson_inverse(3.7, uniform_open(rng)));
    EXPECT_LT(std::fabs(s / reps - 3.7), 3 * std::sqrt(3.7 / reps));
    EXPECT_LE(poisson_inverse(100.0, 0.3), poisson_inverse(100.5, 0.3));
}

TEST(Richness, AmazonTableValues) {
    const auto r = richness_posterior(amazon(1.0), 3.949e11, 100000, 1);
    const auto s = summarize(r.values());
    EXPECT_NEAR(s.mean, 15051, 0.01 * 15051);
    EXPECT_NEAR(s.quantiles[0], 14378, 0.015 * 14378);
    EXPECT_NEAR(s.quantiles[4], 15678, 0.015 * 15678);
}

TEST(Transforms, Boundaries) {
    const auto z = diversity_transforms({0.0});
    EXPECT_DOUBLE_EQ(z.simpson_mean, 1.0);
    EXPECT_NEAR(z.shannon_mean, 0.0, 1e-15);
    EXPECT_DOUBLE_EQ(diversity_transforms({751.0}).simpson_mean, 1.0 / 752);
    EXPECT_THROW(diversity_transforms({}), domain_error);
}

TEST(Transforms, AmazonCoarsened) {
    const auto d = diversity_transforms(sg_posterior_sample(amazon(0.01), 100000, 2).values);
    EXPECT_NEAR(d.simpson_mean, 0.00136, 0.05 * 0.00136);
    EXPECT_NEAR(d.shannon_mean, 7.1884, 0.01 * 7.1884);
}

TEST(Calibration, MaximalAtFullWeight) {
    const std::vector<double> grid{0.001, 0.01, 0.1, 0.25, 1.0};
    const auto c = calibration_curve(StirlingGammaSpec{1.0, 0.01, 1000}, 1000, 100, grid, 4000, 3);
    ASSERT_EQ(c.size(), grid.size());
    for (std::size_t i = 0; i + 1 < c.size(); ++i) EXPECT_LT(c[i].expected_log_likelihood, c.back().expected_log_likelihood);
    EXPECT_EQ(calibration_curve(StirlingGammaSpec{1.0, 0.01, 1000}, 1000, 100, {1.0}).size(), 1u);
}

TEST(Calibration, AmazonCurveIsMonotone) {
    const std::vector<double> grid{0.001, 0.01, 0.1, 0.25, 1.0};
    const auto c = calibration_curve(StirlingGammaSpec{1.0, 0.0002, amazon_n}, amazon_n, amazon_k, grid, 4000, 3);
    for (std::size_t i = 0; i + 1 < c.size(); ++i) EXPECT_LT(c[i].expected_log_likelihood, c[i + 1].expected_log_likelihood);
}
