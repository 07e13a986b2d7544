#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "datamodel.hpp"
#include "errors.hpp"
#include "gibbs.hpp"
#include "sampling.hpp"
#include "specfun.hpp"

namespace biodiv {

enum class AlphaMethod { fisher, ml };

struct AlphaEstimate {
    double value = 0.0;
    AlphaMethod method = AlphaMethod::ml;
    int iterations = 0;
    double residual = 0.0;
};

namespace detail {

inline void check_alpha_inputs(std::uint64_t n, std::uint64_t k) {
    if (k < 1 || n < 1) throw domain_error("alpha estimate: need n >= 1 and k >= 1");
    if (k > n) throw domain_error("alpha estimate: k exceeds n");
    if (k == n) throw no_finite_solution("alpha estimate: k = n (all taxa distinct) has no finite solution");
}

// Geometric bisection on [1e-8, 1e12] to a 1e-6 relative bracket, then five Newton steps.
template <class F, class DF>
AlphaEstimate solve_alpha(F&& f, DF&& df, AlphaMethod method, const char* what) {
    double lo = 1e-8, hi = 1e12;
    if (f(lo) > 0 || f(hi) < 0)
        throw no_finite_solution(std::string(what) + ": root not bracketed in [1e-8, 1e12]");
    AlphaEstimate est;
    est.method = method;
    while (hi / lo - 1.0 > 1e-6) {
        const double mid = std::sqrt(lo * hi);
        (f(mid) < 0 ? lo : hi) = mid;
        ++est.iterations;
    }
    double a = std::sqrt(lo * hi);
    for (int i = 0; i < 5; ++i) {
        const double d = df(a);
        if (!(d > 0)) break;
        const double next = a - f(a) / d;
        if (!(next > 0)) break;
        a = next;
        ++est.iterations;
    }
    est.value = a;
    est.residual = f(a);
    return est;
}

}  // namespace detail

/// Fisher's log-series estimate: alpha log(1 + n/alpha) = k.
inline AlphaEstimate fisher_alpha(std::uint64_t n, std::uint64_t k) {
    detail::check_alpha_inputs(n, k);
    const double nd = static_cast<double>(n), kd = static_cast<double>(k);
    auto f = [=](double a) { return a * std::log1p(nd / a) - kd; };
    auto df = [=](double a) { return std::log1p(nd / a) - nd / (a + nd); };
    return detail::solve_alpha(f, df, AlphaMethod::fisher, "fisher_alpha");
}

/// Maximum likelihood under the DP partition likelihood: alpha (psi(alpha+n) - psi(alpha)) = k.
/// For k = 1 the likelihood increases as alpha -> 0, so no finite estimate exists.
inline AlphaEstimate mle_alpha(std::uint64_t n, std::uint64_t k) {
    detail::check_alpha_inputs(n, k);
    const double nd = static_cast<double>(n), kd = static_cast<double>(k);
    auto f = [=](double a) { return a * digamma_diff(a, nd) - kd; };
    auto df = [=](double a) { return digamma_diff(a, nd) + a * (trigamma(a + nd) - trigamma(a)); };
    return detail::solve_alpha(f, df, AlphaMethod::ml, "mle_alpha");
}

/// Maximum likelihood for the Aldous-Pitman diversity gamma, by golden-section search on log gamma.
/// Like the DP case, k = 1 and k = n have no finite maximizer.
inline AlphaEstimate mle_gamma(std::uint64_t n, std::uint64_t k) {
    detail::check_alpha_inputs(n, k);
    if (k == 1) throw no_finite_solution("mle_gamma: k = 1 has no finite solution");
    auto loglik = [=](double lg) { return log_V(GibbsModel::ap(std::exp(lg)), n, k); };
    const double guess = std::log(static_cast<double>(k) / std::sqrt(static_cast<double>(n)));
    const double lg = detail::golden_max(loglik, guess - 8, guess + 8);
    const double h = 1e-4;
    const double slope = (loglik(lg + h) - loglik(lg - h)) / (2 * h);
    return {std::exp(lg), AlphaMethod::ml, 0, slope};
}

/// Expected distinct taxa in a subsample of size i drawn without replacement.
inline double classical_rarefaction_at(const PartitionData& data, std::uint64_t i) {
    const Count n = data.n();
    if (i < 1 || i > n) throw domain_error("classical_rarefaction: i outside 1..n");
    double missing = 0.0;
    const double nd = static_cast<double>(n), id = static_cast<double>(i);
    for (const auto& [r, m] : data.freq_counts()) {
        if (n - r < i) continue;
        const double rd = static_cast<double>(r);
        missing += static_cast<double>(m) * std::exp(log_rising(nd - id - rd + 1, rd) - log_rising(nd - rd + 1, rd));
    }
    return static_cast<double>(data.k()) - missing;
}

/// K-bar_i for i = 1..n (index i-1).
inline std::vector<double> classical_rarefaction(const PartitionData& data) {
    std::vector<double> out(data.n());
    for (Count i = 1; i <= data.n(); ++i) out[i - 1] = classical_rarefaction_at(data, i);
    return out;
}

inline std::vector<CurvePoint> classical_rarefaction(const PartitionData& data, const std::vector<std::uint64_t>& points) {
    std::vector<CurvePoint> out;
    out.reserve(points.size());
    for (auto i : points) out.push_back({i, classical_rarefaction_at(data, i), 0.0});
    return out;
}

/// Probability that the next observation repeats an observed taxon.
inline double sample_coverage(const GibbsModel& model, std::uint64_t n, std::uint64_t k) {
    detail::check_nk(n, k);
    const double lv = log_V(model, n, k);
    if (lv == neg_inf) throw domain_error("sample_coverage: data impossible under the model");
    const double lnew = log_V(model, n + 1, k + 1);
    return lnew == neg_inf ? 1.0 : 1.0 - std::exp(lnew - lv);
}

}  // namespace biodiv
