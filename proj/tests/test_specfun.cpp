#include <gtest/gtest.h>

#include <algorithm>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <cmath>
#include <numeric>
#include <vector>

#include "biodiv/specfun.hpp"

using namespace biodiv;

namespace {

double rel(double a, double b) { return std::fabs(a - b) / std::max(std::fabs(b), 1e-300); }

// h_nu(t) by adaptive double-exponential quadrature, for moderate orders only.
double hermite_quad(double nu, double t) {
    boost::math::quadrature::exp_sinh<double> integrator;
    auto f = [&](double u) { return std::exp(-0.5 * u * u - t * u + (-nu - 1) * std::log(u) - std::lgamma(-nu)); };
    return integrator.integrate(f, 1e-14);
}

// Miller-style oracle: recurse upward from arbitrary positive seeds far below, normalize at h_0 = 1.
double log_hermite_miller(int nu, double t, int start = -400) {
    std::vector<double> lh(static_cast<std::size_t>(-start) + 2);
    lh[0] = 0.0;
    lh[1] = 0.0;
    for (int i = 2; i < static_cast<int>(lh.size()); ++i) {
        const double order = start + i - 1;  // lh[i] holds h_{start+i}
        lh[i] = log_add(std::log(t) + lh[i - 1], std::log(-order) + lh[i - 2]);
    }
    const double at0 = lh[static_cast<std::size_t>(-start)];
    return lh[static_cast<std::size_t>(nu - start)] - at0;
}

// Cycle-count distribution of permutations of n elements.
std::vector<long> permutations_by_cycles(int n) {
    std::vector<int> p(n);
    std::iota(p.begin(), p.end(), 0);
    std::vector<long> count(n + 1, 0);
    do {
        std::vector<bool> seen(n, false);
        int cycles = 0;
        for (int i = 0; i < n; ++i) {
            if (seen[i]) continue;
            ++cycles;
            for (int j = i; !seen[j]; j = p[j]) seen[j] = true;
        }
        ++count[cycles];
    } while (std::next_permutation(p.begin(), p.end()));
    return count;
}

}  // namespace

TEST(LogValue, ArithmeticWithSigns) {
    const auto a = LogValue::from_double(3.0), b = LogValue::from_double(-5.0);
    EXPECT_NEAR((a + b).value(), -2.0, 1e-14);
    EXPECT_NEAR((a * b).value(), -15.0, 1e-13);
    EXPECT_NEAR((b / a).value(), -5.0 / 3.0, 1e-14);
    EXPECT_TRUE((a - a).is_zero());
    EXPECT_EQ((a - a).sign, 0);
    EXPECT_TRUE(LogValue::zero().is_zero());
    EXPECT_NEAR((LogValue::zero() + b).value(), -5.0, 1e-14);
    EXPECT_EQ(LogValue::from_double(0.0).sign, 0);
    EXPECT_THROW(a / LogValue::zero(), domain_error);
}

TEST(LogRising, Examples) {
    EXPECT_EQ(log_rising(1.0, 0), 0.0);
    EXPECT_NEAR(log_rising(1.0, 5), std::log(120.0), 1e-14);
    const double big = log_rising(751.23, 553949);
    EXPECT_TRUE(std::isfinite(big));
    EXPECT_THROW(log_rising(0.0, 3), domain_error);
    EXPECT_THROW(log_rising(-1.0, 3), domain_error);
}

TEST(LogRising, MatchesDirectSum) {
    for (double a : {0.5, 1.0, 751.23}) {
        for (int n : {1, 2, 7, 17, 30, 100, 1000, 10000}) {
            long double s = 0;
            for (int i = 0; i < n; ++i) s += std::log(static_cast<long double>(a) + i);
            EXPECT_LT(rel(log_rising(a, n), static_cast<double>(s)), 1e-10) << a << ' ' << n;
        }
    }
    long double s = 0;
    for (int i = 0; i < 553949; ++i) s += std::log(751.23L + i);
    EXPECT_LT(rel(log_rising(751.23, 553949), static_cast<double>(s)), 1e-12);
}

TEST(LogRising, LargeArgumentSmallCount) {
    const double a = 1e12;
    long double s = 0;
    for (int i = 0; i < 1000; ++i) s += std::log(static_cast<long double>(a) + i);
    EXPECT_LT(rel(log_rising(a, 1000), static_cast<double>(s)), 1e-13);
}

TEST(Digamma, Examples) {
    EXPECT_NEAR(digamma(1.0), -0.57721566490153286, 1e-14);
    EXPECT_NEAR(digamma(3.5) - digamma(2.5), 0.4, 1e-14);
    double direct = 0;
    for (int i = 1; i <= 7; ++i) direct += 1.0 / (3.0 + i - 1);
    EXPECT_NEAR(digamma(10.0) - digamma(3.0), direct, 1e-12);
    EXPECT_THROW(digamma(0.0), domain_error);
}

TEST(Digamma, AgreesWithReference) {
    for (double x : {1e-8, 0.01, 0.3, 0.9, 2.0, 2.5, 7.25, 10.0, 33.3, 751.23, 1e5, 4e11}) {
        const double ref = boost::math::digamma(x);
        EXPECT_LT(std::fabs(digamma(x) - ref), 1e-12 * std::max(1.0, std::fabs(ref))) << x;
    }
    for (double x : {1e-3, 0.5, 3.0, 40.0, 1e4, 1e9}) {
        EXPECT_LT(rel(trigamma(x), boost::math::trigamma(x)), 1e-12) << x;
    }
}

TEST(Hermite, MinusOneClosedForm) {
    const double t = 1.3;
    const double phi = std::exp(-0.5 * t * t) / std::sqrt(2 * M_PI);
    EXPECT_NEAR(log_hermite(-1.0, t), std::log(normal_cdf(-t) / phi), 1e-12);
    // h_{-2}(t) + t h_{-1}(t) = h_0 = 1
    for (double s : {0.05, 0.7, 2.0, 9.0}) {
        EXPECT_NEAR(std::exp(log_hermite(-2.0, s)) + s * std::exp(log_hermite(-1.0, s)), 1.0, 1e-12) << s;
    }
}

TEST(Hermite, RecursionAtSmallOrder) {
    const double t = 0.7, nu = -3.0;
    const double hp = std::exp(log_hermite(nu + 1, t));
    const double h0 = std::exp(log_hermite(nu, t));
    const double hm = std::exp(log_hermite(nu - 1, t));
    EXPECT_LT(std::fabs(hp - (t * h0 - nu * hm)) / hp, 1e-12);
}

TEST(Hermite, MillerOracleAtOrderMinus50) {
    EXPECT_LT(rel(log_hermite(-50.0, 2.0), log_hermite_miller(-50, 2.0)), 1e-10);
    EXPECT_LT(std::fabs(log_hermite(-50.0, 2.0) - log_hermite_miller(-50, 2.0)), 1e-8);
    EXPECT_LT(std::fabs(log_hermite(-7.0, 0.3) - log_hermite_miller(-7, 0.3, -2000)), 1e-9);
}

TEST(Hermite, AgreesWithAdaptiveQuadrature) {
    for (double nu : {-0.5, -1.0, -2.5, -4.0, -10.0, -33.0}) {
        for (double t : {0.1, 1.0, 3.0, 8.0}) {
            EXPECT_LT(rel(std::exp(log_hermite(nu, t)), hermite_quad(nu, t)), 1e-9) << nu << ' ' << t;
        }
    }
}

TEST(Hermite, RecursionResidualGrid) {
    for (int nu = -40; nu <= -2; ++nu) {
        for (double t : {0.1, 0.5, 1.0, 2.5, 5.0, 10.0}) {
            const double lp = log_hermite(nu + 1, t), l0 = log_hermite(nu, t), lm = log_hermite(nu - 1, t);
            const double r = std::exp(log_add(std::log(t) + l0, std::log(-nu) + lm) - lp) - 1.0;
            EXPECT_LT(std::fabs(r), 1e-8) << nu << ' ' << t;
        }
    }
}

TEST(Hermite, LargeOrdersStayConsistent) {
    for (double nu : {-1e3, -1e5, -2e6}) {
        for (double t : {0.05, 1.4, 30.0}) {
            const double lp = log_hermite(nu + 1, t), l0 = log_hermite(nu, t), lm = log_hermite(nu - 1, t);
            ASSERT_TRUE(std::isfinite(l0));
            const double r = std::exp(log_add(std::log(t) + l0, std::log(-nu) + lm) - lp) - 1.0;
            EXPECT_LT(std::fabs(r), 1e-8) << nu << ' ' << t;
        }
    }
}

TEST(Hermite, PositiveAndDecreasingInT) {
    for (double nu : {-1.0, -3.0, -20.0, -200.0}) {
        double prev = std::numeric_limits<double>::infinity();
        for (double t = 0.05; t < 20; t *= 1.5) {
            const double l = log_hermite(nu, t);
            EXPECT_GT(std::exp(l), 0.0);
            EXPECT_LT(l, prev);
            prev = l;
        }
    }
}

TEST(Hermite, DomainErrors) {
    EXPECT_THROW(log_hermite(0.5, 1.0), domain_error);
    EXPECT_THROW(log_hermite(-1.0, 0.0), domain_error);
    EXPECT_THROW(log_hermite(-1.0, -2.0), domain_error);
    EXPECT_EQ(log_hermite(0.0, 1.0), 0.0);
}

TEST(Hermite, LadderMatchesQuadrature) {
    for (double t : {0.2, 1.0, 1.414, 6.0}) {
        const HermiteLadder ladder(t, -5000);
        for (long nu : {-5000L, -4999L, -3001L, -777L, -40L, -3L, -2L, -1L}) {
            EXPECT_NEAR(ladder(nu), log_hermite(static_cast<double>(nu), t), 1e-10 * std::max(1.0, std::fabs(ladder(nu))))
                << t << ' ' << nu;
        }
        EXPECT_NEAR(ladder(0), 0.0, 0.0);
    }
}

TEST(Coefficients, StirlingMatchesPermutationCount) {
    const auto table = build_coefficients(CoefficientKind::stirling1, 0.0, 0.0, 7);
    EXPECT_NEAR(table.at(4, 2).value(), 11.0, 1e-12);
    for (int n = 1; n <= 7; ++n) {
        const auto counts = permutations_by_cycles(n);
        for (int k = 1; k <= n; ++k) EXPECT_NEAR(table.at(n, k).value(), static_cast<double>(counts[k]), 1e-9) << n << k;
    }
}

TEST(Coefficients, BaseCase) {
    EXPECT_NEAR(build_coefficients(CoefficientKind::stirling1, 0, 0, 3).at(1, 1).value(), 1.0, 0);
    EXPECT_NEAR(build_coefficients(CoefficientKind::gen_factorial, 0.5, 0, 3).at(1, 1).value(), 1.0, 0);
    EXPECT_NEAR(build_coefficients(CoefficientKind::gen_factorial, -1.0, 0, 3).at(1, 1).value(), 1.0, 0);
    EXPECT_NEAR(build_coefficients(CoefficientKind::noncentral_stirling1, 0, 4.0, 3).at(1, 1).value(), 1.0, 0);
    EXPECT_NEAR(build_coefficients(CoefficientKind::noncentral_gen_factorial, 0.5, 3.5, 3).at(1, 1).value(), 1.0, 0);
}

TEST(Coefficients, GeneralizedFactorialExplicitSum) {
    // C(n,k;sigma) = (1/k!) sum_j (-1)^j binom(k,j) (-j sigma)_n, rising factorials.
    for (double sigma : {0.5, 0.25, -1.0}) {
        const auto table = build_coefficients(CoefficientKind::gen_factorial, sigma, 0, 10);
        for (int n = 1; n <= 10; ++n) {
            for (int k = 1; k <= n; ++k) {
                long double acc = 0, binom = 1, fact = 1;
                for (int i = 1; i <= k; ++i) fact *= i;
                for (int j = 0; j <= k; ++j) {
                    long double rising = 1;
                    for (int i = 0; i < n; ++i) rising *= -j * sigma + i;
                    acc += (j % 2 ? -1 : 1) * binom * rising;
                    binom = binom * (k - j) / (j + 1);
                }
                const double expect = static_cast<double>(acc / fact);
                EXPECT_NEAR(table.raw(n, k).value(), expect, 1e-9 * std::max(1.0, std::fabs(expect)))
                    << sigma << ' ' << n << ' ' << k;
            }
        }
    }
}

TEST(Coefficients, SmallSigmaApproachesStirling) {
    const auto g = build_coefficients(CoefficientKind::gen_factorial, 1e-10, 0, 12);
    const auto s = build_coefficients(CoefficientKind::stirling1, 0, 0, 12);
    for (int n = 1; n <= 12; ++n)
        for (int k = 1; k <= n; ++k) EXPECT_LT(rel(g.at(n, k).value(), s.at(n, k).value()), 1e-7);
}

TEST(Coefficients, NoncentralRecursionMatchesConvolution) {
    for (double sigma : {0.0, 0.5, -1.0}) {
        const auto kind = sigma == 0 ? CoefficientKind::stirling1 : CoefficientKind::gen_factorial;
        const auto nkind = sigma == 0 ? CoefficientKind::noncentral_stirling1 : CoefficientKind::noncentral_gen_factorial;
        const auto central = build_coefficients(kind, sigma, 0, 40);
        for (double shift : {0.5, 3.0, 17.5}) {
            const auto nc = build_coefficients(nkind, sigma, shift, 40);
            for (int m = 0; m <= 40; m += 3)
                for (int j = 0; j <= m; ++j) {
                    const auto direct = convolve_noncentral(central, shift, m, j);
                    if (direct.is_zero()) {
                        EXPECT_TRUE(nc.at(m, j).is_zero());
                        continue;
                    }
                    EXPECT_LT(std::fabs(nc.at(m, j).log_magnitude - direct.log_magnitude), 1e-11) << sigma << ' ' << m << ' ' << j;
                }
        }
    }
}

TEST(Coefficients, TablesSatisfyRecursion) {
    const auto t = build_coefficients(CoefficientKind::gen_factorial, 0.5, 0, 60);
    for (std::size_t n = 1; n < 60; ++n)
        for (std::size_t k = 1; k <= n; ++k) {
            const auto lhs = t.at(n + 1, k);
            const auto rhs = LogValue::from_double(static_cast<double>(n) - 0.5 * static_cast<double>(k)) * t.at(n, k) + t.at(n, k - 1);
            EXPECT_EQ(lhs, rhs);
        }
    const auto row = coefficient_row(CoefficientKind::gen_factorial, 0.5, 0, 60);
    for (std::size_t k = 0; k <= 60; ++k) EXPECT_EQ(row[k], t.at(60, k));
}

TEST(Coefficients, Errors) {
    EXPECT_THROW(build_coefficients(CoefficientKind::gen_factorial, 1.5, 0, 4), domain_error);
    EXPECT_THROW(build_coefficients(CoefficientKind::gen_factorial, 0.5, 0, 0), domain_error);
    EXPECT_THROW(build_coefficients(CoefficientKind::stirling1, 0, 0, 100000), table_size_exceeded);
}

TEST(Coefficients, CacheReturnsSameRow) {
    auto& cache = CoefficientCache::instance();
    const auto a = cache.row(CoefficientKind::stirling1, 0, 0, 30);
    const auto b = cache.row(CoefficientKind::stirling1, 0, 0, 30);
    EXPECT_EQ(a.get(), b.get());
    EXPECT_EQ(*a, coefficient_row(CoefficientKind::stirling1, 0, 0, 30));
}
