#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "aldous_pitman.hpp"
#include "datamodel.hpp"
#include "errors.hpp"
#include "sampling.hpp"
#include "specfun.hpp"

namespace biodiv {

struct DirichletMultinomial {
    double sigma;  // negative
    std::uint64_t H;
};

struct DirichletProcess {
    double alpha;
};

/// Parameterized by its sigma-diversity gamma, the almost-sure limit of K_n / sqrt(n).
struct AldousPitman {
    double gamma;
};

class GibbsModel {
public:
    using Family = std::variant<DirichletMultinomial, DirichletProcess, AldousPitman>;

    explicit GibbsModel(Family f) : family_(f) {
        std::visit(
            [](const auto& m) {
                using T = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<T, DirichletMultinomial>) {
                    if (!(m.sigma < 0) || !std::isfinite(m.sigma)) throw domain_error("DM: sigma must be negative");
                    if (m.H < 1) throw domain_error("DM: H must be at least 1");
                } else if constexpr (std::is_same_v<T, DirichletProcess>) {
                    if (!(m.alpha > 0) || !std::isfinite(m.alpha)) throw domain_error("DP: alpha must be positive");
                } else {
                    if (!(m.gamma > 0) || !std::isfinite(m.gamma)) throw domain_error("AP: gamma must be positive");
                }
            },
            family_);
    }

    static GibbsModel dm(double sigma, std::uint64_t H) { return GibbsModel(DirichletMultinomial{sigma, H}); }
    static GibbsModel dp(double alpha) { return GibbsModel(DirichletProcess{alpha}); }
    static GibbsModel ap(double gamma) { return GibbsModel(AldousPitman{gamma}); }

    const Family& family() const { return family_; }
    bool is_dm() const { return std::holds_alternative<DirichletMultinomial>(family_); }
    bool is_dp() const { return std::holds_alternative<DirichletProcess>(family_); }
    bool is_ap() const { return std::holds_alternative<AldousPitman>(family_); }
    const DirichletMultinomial& dm() const { return std::get<DirichletMultinomial>(family_); }
    double alpha() const { return std::get<DirichletProcess>(family_).alpha; }
    double gamma() const { return std::get<AldousPitman>(family_).gamma; }

    double sigma() const {
        if (is_dm()) return dm().sigma;
        return is_dp() ? 0.0 : 0.5;
    }

    std::string name() const {
        if (is_dm()) return "dm";
        return is_dp() ? "dp" : "ap";
    }

private:
    Family family_;
};

namespace detail {

inline void check_nk(std::uint64_t n, std::uint64_t k) {
    if (k < 1 || k > n) throw domain_error("need 1 <= k <= n (got n=" + std::to_string(n) + ", k=" + std::to_string(k) + ")");
}

inline double log_V_dm(const DirichletMultinomial& m, std::uint64_t n, std::uint64_t k) {
    if (k > m.H) return neg_inf;
    const double s = -m.sigma;
    const double H = static_cast<double>(m.H);
    return static_cast<double>(k - 1) * std::log(s) + log_rising(H - static_cast<double>(k) + 1, static_cast<double>(k - 1)) -
           log_rising(H * s + 1, static_cast<double>(n - 1));
}

inline double log_V_dp(double alpha, std::uint64_t n, std::uint64_t k) {
    return static_cast<double>(k) * std::log(alpha) - log_rising(alpha, static_cast<double>(n));
}

inline double log_V_ap_prefix(double gamma, std::uint64_t n, std::uint64_t k) {
    const double nd = static_cast<double>(n), kd = static_cast<double>(k);
    return (nd - 0.5 * kd - 0.5) * std::numbers::ln2 + (kd - 1) * std::log(0.5 * gamma);
}

inline long ap_order(std::uint64_t n, std::uint64_t k) {
    return static_cast<long>(k) + 1 - 2 * static_cast<long>(n);
}

}  // namespace detail

/// log V_{n,k} for the model's Gibbs weights; -inf for DM with k > H.
inline double log_V(const GibbsModel& model, std::uint64_t n, std::uint64_t k) {
    detail::check_nk(n, k);
    if (model.is_dm()) return detail::log_V_dm(model.dm(), n, k);
    if (model.is_dp()) return detail::log_V_dp(model.alpha(), n, k);
    if (n == 1) return 0.0;
    const double g = model.gamma();
    return detail::log_V_ap_prefix(g, n, k) +
           log_hermite(static_cast<double>(detail::ap_order(n, k)), g / std::numbers::sqrt2);
}

/// log V_{n,k} for all n up to a bound; Aldous-Pitman weights share one Hermite ladder.
class LogWeights {
public:
    LogWeights(const GibbsModel& model, std::uint64_t n_max) : model_(model), n_max_(n_max) {
        if (model.is_ap() && n_max >= 2)
            ladder_ = HermiteLadder(model.gamma() / std::numbers::sqrt2, detail::ap_order(n_max, 1));
    }

    const GibbsModel& model() const { return model_; }
    std::uint64_t n_max() const { return n_max_; }

    double operator()(std::uint64_t n, std::uint64_t k) const {
        detail::check_nk(n, k);
        if (!model_.is_ap()) return log_V(model_, n, k);
        if (n > n_max_) throw domain_error("LogWeights: n beyond precomputed range");
        if (n == 1) return 0.0;
        return detail::log_V_ap_prefix(model_.gamma(), n, k) + ladder_(detail::ap_order(n, k));
    }

    /// V_{n+1,k+1} / V_{n,k}; 1 for the first observation.
    double p_new(std::uint64_t n, std::uint64_t k) const {
        if (n == 0) return 1.0;
        if (model_.is_dp()) return model_.alpha() / (model_.alpha() + static_cast<double>(n));
        if (model_.is_dm()) {
            const auto& d = model_.dm();
            if (k >= d.H) return 0.0;
            const double s = -d.sigma;
            return static_cast<double>(d.H - k) * s / (static_cast<double>(d.H) * s + static_cast<double>(n));
        }
        return std::exp((*this)(n + 1, k + 1) - (*this)(n, k));
    }

private:
    GibbsModel model_;
    std::uint64_t n_max_;
    HermiteLadder ladder_;
};

/// log of the exchangeable partition probability of the observed block sizes.
inline double log_eppf(const GibbsModel& model, const PartitionData& data) {
    if (data.n() == 0) throw domain_error("log_eppf: empty data");
    const double one_minus_sigma = 1.0 - model.sigma();
    double acc = log_V(model, data.n(), data.k());
    if (acc == neg_inf) return acc;
    for (Count a : data.abundances()) acc += log_rising(one_minus_sigma, static_cast<double>(a - 1));
    return acc;
}

struct PredictiveSplit {
    double p_new = 1.0;
    std::vector<double> reuse_weights;  // per observed taxon, summing to 1 - p_new
};

inline PredictiveSplit predictive(const GibbsModel& model, std::uint64_t n, std::uint64_t k,
                                  const std::vector<Count>& abundances) {
    if (abundances.size() != k) throw domain_error("predictive: abundances do not match k");
    if (std::accumulate(abundances.begin(), abundances.end(), Count{0}) != n)
        throw domain_error("predictive: abundances do not sum to n");
    PredictiveSplit out;
    if (n == 0) return out;
    detail::check_nk(n, k);
    const double lv = log_V(model, n, k);
    if (lv == neg_inf) throw domain_error("predictive: data impossible under the model");
    const double lnew = log_V(model, n + 1, k + 1);
    out.p_new = lnew == neg_inf ? 0.0 : std::exp(lnew - lv);
    const double ratio = std::exp(log_V(model, n + 1, k) - lv);
    const double sigma = model.sigma();
    out.reuse_weights.reserve(k);
    for (Count a : abundances) out.reuse_weights.push_back((static_cast<double>(a) - sigma) * ratio);
    return out;
}

inline PredictiveSplit predictive(const GibbsModel& model, const PartitionData& data) {
    return predictive(model, data.n(), data.k(), data.abundances());
}

/// Taxon labels 0, 1, 2, ... in order of discovery.
using ObservationStream = std::vector<std::uint32_t>;

namespace detail {

// Observed taxon j chosen with weight n_j - sigma, given the draw sequence and counts.
inline std::uint32_t choose_existing(double sigma, const std::vector<std::uint32_t>& obs, const std::vector<Count>& counts,
                                     Rng& rng) {
    const double n = static_cast<double>(obs.size()), k = static_cast<double>(counts.size());
    auto uniform_obs = [&] { return obs[static_cast<std::size_t>(uniform_open(rng) * n)]; };
    if (sigma == 0.0) return uniform_obs();
    if (sigma < 0.0) {
        if (uniform_open(rng) < n / (n - sigma * k)) return uniform_obs();
        return static_cast<std::uint32_t>(uniform_open(rng) * k);
    }
    for (;;) {
        const std::uint32_t label = uniform_obs();
        const double c = static_cast<double>(counts[label]);
        if (uniform_open(rng) * c < c - sigma) return label;
    }
}

}  // namespace detail

/// Sequential urn; `visit(label, is_new)` is called after each draw.
template <class Visit>
void run_urn(const GibbsModel& model, std::uint64_t n_steps, Rng& rng, Visit&& visit) {
    const LogWeights weights(model, model.is_ap() ? n_steps + 1 : 1);
    std::vector<std::uint32_t> obs;
    obs.reserve(n_steps);
    std::vector<Count> counts;
    const double sigma = model.sigma();
    for (std::uint64_t n = 0; n < n_steps; ++n) {
        const std::uint64_t k = counts.size();
        std::uint32_t label;
        bool fresh = uniform_open(rng) < weights.p_new(n, k);
        if (fresh) {
            label = static_cast<std::uint32_t>(k);
            counts.push_back(1);
        } else {
            label = detail::choose_existing(sigma, obs, counts, rng);
            ++counts[label];
        }
        obs.push_back(label);
        visit(label, fresh);
    }
}

inline ObservationStream urn_sample(const GibbsModel& model, std::uint64_t n_steps, Rng& rng) {
    if (n_steps < 1) throw domain_error("urn_sample: need at least one step");
    ObservationStream out;
    out.reserve(n_steps);
    run_urn(model, n_steps, rng, [&](std::uint32_t label, bool) { out.push_back(label); });
    return out;
}

inline ObservationStream urn_sample(const GibbsModel& model, std::uint64_t n_steps, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    return urn_sample(model, n_steps, rng);
}

/// Abundances of one urn run, in order of discovery.
inline std::vector<Count> urn_counts(const GibbsModel& model, std::uint64_t n_steps, Rng& rng) {
    std::vector<Count> counts;
    run_urn(model, n_steps, rng, [&](std::uint32_t label, bool fresh) {
        if (fresh)
            counts.push_back(1);
        else
            ++counts[label];
    });
    return counts;
}

inline constexpr std::size_t default_table_limit = 10000;

namespace detail {

inline CoefficientKind central_kind(double sigma) {
    return sigma == 0.0 ? CoefficientKind::stirling1 : CoefficientKind::gen_factorial;
}

inline CoefficientKind noncentral_kind(double sigma) {
    return sigma == 0.0 ? CoefficientKind::noncentral_stirling1 : CoefficientKind::noncentral_gen_factorial;
}

}  // namespace detail

/// P(K_n = k), k = 1..n (index k-1).
inline std::vector<double> prior_Kn_pmf(const GibbsModel& model, std::uint64_t n,
                                        std::size_t table_limit = default_table_limit) {
    if (n < 1) throw domain_error("prior_Kn_pmf: n must be at least 1");
    if (n > table_limit) throw table_size_exceeded("prior_Kn_pmf: n exceeds the coefficient table limit");
    const double sigma = model.sigma();
    const auto row = CoefficientCache::instance().row(detail::central_kind(sigma), sigma, 0.0, n);
    const LogWeights lw(model, n);
    std::vector<double> pmf(n);
    for (std::uint64_t k = 1; k <= n; ++k) {
        const double v = lw(n, k);
        pmf[k - 1] = v == neg_inf ? 0.0 : (LogValue::from_log(v) * (*row)[k]).value();
    }
    return pmf;
}

struct MonteCarloOptions {
    std::size_t replicates = 1000;
    std::uint64_t seed = 1;
};

/// P(K_m^(n) = j), j = 0..m, for the number of new taxa in m further draws.
/// Horizons beyond the table limit fall back to simulation.
inline std::vector<double> posterior_Km_pmf(const GibbsModel& model, std::uint64_t n, std::uint64_t k, std::uint64_t m,
                                            std::size_t table_limit = default_table_limit,
                                            const MonteCarloOptions& mc = {}) {
    detail::check_nk(n, k);
    if (m < 1) throw domain_error("posterior_Km_pmf: m must be at least 1");
    const LogWeights lw(model, n + m + 1);
    const double l0 = lw(n, k);
    if (l0 == neg_inf) throw domain_error("posterior_Km_pmf: data impossible under the model");
    std::vector<double> pmf(m + 1, 0.0);
    if (m > table_limit) {
        Rng rng = make_rng(mc.seed);
        for (std::size_t r = 0; r < mc.replicates; ++r) {
            std::uint64_t j = 0;
            for (std::uint64_t s = 0; s < m; ++s)
                if (uniform_open(rng) < lw.p_new(n + s, k + j)) ++j;
            pmf[j] += 1.0 / static_cast<double>(mc.replicates);
        }
        return pmf;
    }
    const double sigma = model.sigma();
    const double shift = static_cast<double>(n) - static_cast<double>(k) * sigma;
    const auto row = CoefficientCache::instance().row(detail::noncentral_kind(sigma), sigma, shift, m);
    for (std::uint64_t j = 0; j <= m; ++j) {
        const double v = lw(n + m, k + j);
        pmf[j] = v == neg_inf ? 0.0 : (LogValue::from_log(v - l0) * (*row)[j]).value();
    }
    return pmf;
}

/// Expected (or observed) distinct-taxa count at sample size i; se is zero for closed forms.
struct CurvePoint {
    std::uint64_t i = 0;
    double value = 0.0;
    double se = 0.0;
};

namespace detail {

inline double dm_rarefaction(const DirichletMultinomial& d, std::uint64_t i) {
    if (d.H == 1) return 1.0;
    const double s = -d.sigma, H = static_cast<double>(d.H);
    const double ii = static_cast<double>(i);
    return H - H * std::exp(log_rising(H * s - s, ii) - log_rising(H * s, ii));
}

inline double dm_extrapolation(const DirichletMultinomial& d, std::uint64_t n, std::uint64_t k, std::uint64_t m) {
    const double s = -d.sigma, H = static_cast<double>(d.H), nd = static_cast<double>(n);
    const double md = static_cast<double>(m);
    return H - (H - static_cast<double>(k)) * std::exp(log_rising(nd + H * s - s, md) - log_rising(nd + H * s, md));
}

// Monte Carlo K trajectories from (n0, k0) for horizon m; returns mean and se per step.
inline std::vector<CurvePoint> simulate_curve(const GibbsModel& model, std::uint64_t n0, std::uint64_t k0,
                                              std::uint64_t m, const MonteCarloOptions& mc) {
    if (mc.replicates < 2) throw domain_error("Monte Carlo curves need at least 2 replicates");
    std::vector<double> sum(m, 0.0), sum2(m, 0.0);
    Rng rng = make_rng(mc.seed);
    if (model.is_ap()) {
        APLatentCache cache(model.gamma());
        for (std::size_t r = 0; r < mc.replicates; ++r) {
            std::uint64_t k = k0;
            for (std::uint64_t s = 0; s < m; ++s) {
                if (cache.step_new(n0 + s, k, rng)) ++k;
                sum[s] += static_cast<double>(k);
                sum2[s] += static_cast<double>(k) * static_cast<double>(k);
            }
        }
    } else {
        const LogWeights lw(model, 1);
        for (std::size_t r = 0; r < mc.replicates; ++r) {
            std::uint64_t k = k0;
            for (std::uint64_t s = 0; s < m; ++s) {
                if (uniform_open(rng) < lw.p_new(n0 + s, k)) ++k;
                sum[s] += static_cast<double>(k);
                sum2[s] += static_cast<double>(k) * static_cast<double>(k);
            }
        }
    }
    std::vector<CurvePoint> out(m);
    const double R = static_cast<double>(mc.replicates);
    for (std::uint64_t s = 0; s < m; ++s) {
        const double mean = sum[s] / R;
        const double var = std::max(0.0, (sum2[s] - R * mean * mean) / (R - 1));
        out[s] = {n0 + s + 1, mean, std::sqrt(var / R)};
    }
    return out;
}

}  // namespace detail

/// E(K_i), i = 1..n. Closed form for DM and DP; Monte Carlo over the latent predictive sampler for AP.
inline std::vector<CurvePoint> rarefaction(const GibbsModel& model, std::uint64_t n, const MonteCarloOptions& mc = {}) {
    if (n < 1) throw domain_error("rarefaction: n must be at least 1");
    if (model.is_ap()) return detail::simulate_curve(model, 0, 0, n, mc);
    std::vector<CurvePoint> out(n);
    for (std::uint64_t i = 1; i <= n; ++i) {
        const double v = model.is_dp() ? model.alpha() * digamma_diff(model.alpha(), static_cast<double>(i))
                                       : detail::dm_rarefaction(model.dm(), i);
        out[i - 1] = {i, v, 0.0};
    }
    return out;
}

/// E(K_{n+s} | n, k), s = 1..m.
inline std::vector<CurvePoint> extrapolation(const GibbsModel& model, std::uint64_t n, std::uint64_t k, std::uint64_t m,
                                             const MonteCarloOptions& mc = {}) {
    detail::check_nk(n, k);
    if (model.is_dm() && k > model.dm().H) throw domain_error("extrapolation: k exceeds H");
    if (model.is_ap()) return detail::simulate_curve(model, n, k, m, mc);
    std::vector<CurvePoint> out(m);
    for (std::uint64_t s = 1; s <= m; ++s) {
        double v;
        if (model.is_dp()) {
            const double a = model.alpha();
            v = static_cast<double>(k) + a * digamma_diff(a + static_cast<double>(n), static_cast<double>(s));
        } else {
            v = detail::dm_extrapolation(model.dm(), n, k, s);
        }
        out[s - 1] = {n + s, v, 0.0};
    }
    return out;
}

/// E(M_{r,n}), r = 1..r_max (index r-1). Closed form for DP; urn simulation otherwise.
inline std::vector<double> expected_freq_counts(const GibbsModel& model, std::uint64_t n, std::uint64_t r_max,
                                                const MonteCarloOptions& mc = {}) {
    if (r_max > n) throw domain_error("expected_freq_counts: r_max exceeds n");
    std::vector<double> out(r_max, 0.0);
    if (model.is_dp()) {
        const double a = model.alpha(), nd = static_cast<double>(n);
        const double base = std::log(a) - log_rising(a, nd);
        for (std::uint64_t r = 1; r <= r_max; ++r) {
            const double rd = static_cast<double>(r);
            out[r - 1] = std::exp(base + log_rising(a, nd - rd) + log_binom(nd, rd) + std::lgamma(rd));
        }
        return out;
    }
    Rng rng = make_rng(mc.seed);
    for (std::size_t rep = 0; rep < mc.replicates; ++rep)
        for (Count c : urn_counts(model, n, rng))
            if (c <= r_max) out[c - 1] += 1.0;
    for (double& v : out) v /= static_cast<double>(mc.replicates);
    return out;
}

/// Mean ranked abundance (descending) at ranks 1..r_max over simulated samples of size n;
/// replicates with fewer taxa contribute zeros.
inline std::vector<CurvePoint> expected_rank_abundance(const GibbsModel& model, std::uint64_t n, std::uint64_t r_max,
                                                       const MonteCarloOptions& mc = {}) {
    if (n < 1 || r_max < 1) throw domain_error("expected_rank_abundance: need n >= 1 and r_max >= 1");
    if (mc.replicates < 2) throw domain_error("Monte Carlo curves need at least 2 replicates");
    std::vector<double> sum(r_max, 0.0), sum2(r_max, 0.0);
    Rng rng = make_rng(mc.seed);
    for (std::size_t rep = 0; rep < mc.replicates; ++rep) {
        auto counts = urn_counts(model, n, rng);
        std::sort(counts.begin(), counts.end(), std::greater<>());
        for (std::size_t r = 0; r < std::min<std::size_t>(r_max, counts.size()); ++r) {
            const double c = static_cast<double>(counts[r]);
            sum[r] += c;
            sum2[r] += c * c;
        }
    }
    std::vector<CurvePoint> out(r_max);
    const double R = static_cast<double>(mc.replicates);
    for (std::uint64_t r = 0; r < r_max; ++r) {
        const double mean = sum[r] / R;
        out[r] = {r + 1, mean, std::sqrt(std::max(0.0, (sum2[r] - R * mean * mean) / (R - 1)) / R)};
    }
    return out;
}

struct DiversityIndices {
    double expected_simpson = 0.0;
    double expected_shannon = 0.0;
    double shannon_se = 0.0;
    bool shannon_approximate = false;
};

/// Expected Simpson index P(X1 = X2) = (1 - sigma) V_{2,1} and expected Shannon entropy.
/// Shannon is exact for DP and Monte Carlo over the random weights otherwise.
inline DiversityIndices diversity_indices(const GibbsModel& model, const MonteCarloOptions& mc = {},
                                          std::size_t truncation = 10000) {
    DiversityIndices out;
    if (model.is_dp()) {
        const double a = model.alpha();
        out.expected_simpson = 1.0 / (1.0 + a);
        out.expected_shannon = digamma(a + 1) - digamma(1);
        return out;
    }
    out.expected_simpson = (1.0 - model.sigma()) * std::exp(log_V(model, 2, 1));
    out.shannon_approximate = true;
    Rng rng = make_rng(mc.seed);
    double s = 0.0, s2 = 0.0;
    for (std::size_t r = 0; r < mc.replicates; ++r) {
        double h = 0.0;
        if (model.is_dm()) {
            const auto& d = model.dm();
            std::gamma_distribution<double> g(-d.sigma, 1.0);
            std::vector<double> w(d.H);
            double tot = 0.0;
            for (double& x : w) tot += (x = g(rng));
            for (double x : w)
                if (x > 0) h -= (x / tot) * std::log(x / tot);
        } else {
            for (double p : ap_stick_sample(model.gamma(), truncation, rng).weights)
                if (p > 0) h -= p * std::log(p);
        }
        s += h;
        s2 += h * h;
    }
    const double R = static_cast<double>(mc.replicates);
    out.expected_shannon = s / R;
    out.shannon_se = R > 1 ? std::sqrt(std::max(0.0, (s2 - R * out.expected_shannon * out.expected_shannon) / (R - 1)) / R) : 0.0;
    return out;
}

}  // namespace biodiv
