#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <shared_mutex>
#include <tuple>
#include <vector>

#include "errors.hpp"

namespace biodiv {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

/// Signed value stored as (sign, log|x|).
struct LogValue {
    double log_magnitude = neg_inf;
    int sign = 0;

    static LogValue zero() { return {}; }
    static LogValue one() { return {0.0, 1}; }
    static LogValue from_log(double lm, int s = 1) {
        if (s == 0 || lm == neg_inf) return {};
        return {lm, s > 0 ? 1 : -1};
    }
    static LogValue from_double(double x) {
        if (x == 0.0) return {};
        return {std::log(std::fabs(x)), x > 0 ? 1 : -1};
    }

    bool is_zero() const { return sign == 0; }
    double value() const { return sign == 0 ? 0.0 : sign * std::exp(log_magnitude); }

    friend LogValue operator*(LogValue a, LogValue b) {
        if (a.sign == 0 || b.sign == 0) return {};
        return {a.log_magnitude + b.log_magnitude, a.sign * b.sign};
    }
    friend LogValue operator/(LogValue a, LogValue b) {
        if (b.sign == 0) throw domain_error("LogValue division by zero");
        if (a.sign == 0) return {};
        return {a.log_magnitude - b.log_magnitude, a.sign * b.sign};
    }
    friend LogValue operator-(LogValue a) { return {a.log_magnitude, -a.sign}; }
    friend LogValue operator+(LogValue a, LogValue b) {
        if (a.sign == 0) return b;
        if (b.sign == 0) return a;
        if (a.log_magnitude < b.log_magnitude) std::swap(a, b);
        const double d = b.log_magnitude - a.log_magnitude;
        if (a.sign == b.sign) return {a.log_magnitude + std::log1p(std::exp(d)), a.sign};
        if (d == 0.0) return {};
        return {a.log_magnitude + std::log1p(-std::exp(d)), a.sign};
    }
    friend LogValue operator-(LogValue a, LogValue b) { return a + (-b); }
    friend bool operator==(const LogValue&, const LogValue&) = default;
};

/// log(exp(a) + exp(b)) without overflow.
inline double log_add(double a, double b) {
    if (a == neg_inf) return b;
    if (b == neg_inf) return a;
    if (a < b) std::swap(a, b);
    return a + std::log1p(std::exp(b - a));
}

namespace detail {

// log Gamma(x) - [(x - 1/2) log x - x + log(2 pi)/2], valid for x >= 10.
inline double stirling_tail(double x) {
    const double r = 1.0 / x, r2 = r * r;
    return r * (1.0 / 12 - r2 * (1.0 / 360 - r2 * (1.0 / 1260 - r2 * (1.0 / 1680 - r2 / 1188))));
}

}  // namespace detail

/// log((a)_n) for the rising factorial (a)_n = a (a+1) ... (a+n-1).
inline double log_rising(double a, double n) {
    if (!(a > 0)) throw domain_error("log_rising: a must be positive");
    if (!(n >= 0)) throw domain_error("log_rising: n must be nonnegative");
    if (n == 0) return 0.0;
    double acc = 0.0;
    if (n <= 16) {
        for (int i = 0; i < static_cast<int>(n); ++i) acc += std::log(a + i);
        return acc;
    }
    while (a < 10.0 && n > 0) {
        acc += std::log(a);
        a += 1.0;
        n -= 1.0;
    }
    if (n == 0) return acc;
    // Stirling difference written so that large a with small n/a keeps full precision.
    const double b = a + n;
    acc += (a - 0.5) * std::log1p(n / a) + n * std::log(b) - n;
    acc += detail::stirling_tail(b) - detail::stirling_tail(a);
    return acc;
}

/// log binomial coefficient for real arguments n >= k >= 0.
inline double log_binom(double n, double k) {
    if (k < 0 || k > n) return neg_inf;
    if (k == 0 || k == n) return 0.0;
    return std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1);
}

/// Digamma function for x > 0.
inline double digamma(double x) {
    if (!(x > 0)) throw domain_error("digamma: x must be positive");
    double acc = 0.0;
    while (x < 10.0) {
        acc -= 1.0 / x;
        x += 1.0;
    }
    const double f = 1.0 / (x * x);
    const double series =
        f * (1.0 / 12 - f * (1.0 / 120 - f * (1.0 / 252 - f * (1.0 / 240 - f * (1.0 / 132 - f * 691.0 / 32760)))));
    return acc + std::log(x) - 0.5 / x - series;
}

/// Trigamma function for x > 0.
inline double trigamma(double x) {
    if (!(x > 0)) throw domain_error("trigamma: x must be positive");
    double acc = 0.0;
    while (x < 10.0) {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    const double r = 1.0 / x, f = r * r;
    return acc + r + 0.5 * f + r * f * (1.0 / 6 - f * (1.0 / 30 - f * (1.0 / 42 - f * (1.0 / 30 - f * 5.0 / 66))));
}

/// psi(a + n) - psi(a), summed directly for short runs.
inline double digamma_diff(double a, double n) {
    if (n == 0) return 0.0;
    if (n <= 32 && n == std::floor(n)) {
        double s = 0.0;
        for (int i = 0; i < static_cast<int>(n); ++i) s += 1.0 / (a + i);
        return s;
    }
    return digamma(a + n) - digamma(a);
}

/// log of the Hermite function h_nu(t) = Gamma(-nu)^{-1} int_0^inf exp(-u^2/2 - t u) u^{-nu-1} du.
inline double log_hermite(double nu, double t) {
    if (nu == 0.0) return 0.0;
    if (!(nu < 0)) throw domain_error("log_hermite: order must be negative");
    if (!(t > 0) || !std::isfinite(t)) throw domain_error("log_hermite: t must be positive");

    // Substituting u = e^s gives a concave log-integrand in s.
    const double m = -nu;
    auto g = [m, t](double s) {
        const double u = std::exp(s);
        return m * s - 0.5 * u * u - t * u;
    };
    const double u0 = 2.0 * m / (t + std::sqrt(t * t + 4.0 * m));
    const double s0 = std::log(u0);
    const double g0 = g(s0);
    const double sd = 1.0 / std::sqrt(2.0 * u0 * u0 + t * u0);

    constexpr double drop = 46.0;
    auto edge = [&](double dir) {
        double inner = 0.0, outer = sd;
        while (g0 - g(s0 + dir * outer) < drop) {
            inner = outer;
            outer *= 2.0;
        }
        for (int it = 0; it < 50; ++it) {
            const double mid = 0.5 * (inner + outer);
            (g0 - g(s0 + dir * mid) < drop ? inner : outer) = mid;
        }
        return s0 + dir * outer;
    };
    const double lo = edge(-1.0), hi = edge(1.0);

    const std::size_t nodes = std::clamp<std::size_t>(
        static_cast<std::size_t>(8.0 * (hi - lo) / sd), 512, std::size_t{1} << 16);
    const double h = (hi - lo) / static_cast<double>(nodes - 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < nodes; ++i) {
        const double w = (i == 0 || i + 1 == nodes) ? 0.5 : 1.0;
        sum += w * std::exp(g(lo + h * static_cast<double>(i)) - g0);
    }
    return g0 + std::log(sum * h) - std::lgamma(m);
}

/// log h_nu(t) for every integer order nu_min..0 at a fixed t.
/// The bottom two orders come from quadrature; the rest follow the upward
/// recursion h_{nu+1} = t h_nu - nu h_{nu-1}, whose terms are all positive.
class HermiteLadder {
public:
    HermiteLadder() = default;
    HermiteLadder(double t, long nu_min) : t_(t), nu_min_(std::min(nu_min, -1L)) {
        if (!(t > 0)) throw domain_error("HermiteLadder: t must be positive");
        const std::size_t size = static_cast<std::size_t>(-nu_min_) + 1;
        lh_.resize(size);
        lh_[0] = log_hermite(static_cast<double>(nu_min_), t);
        lh_[1] = log_hermite(static_cast<double>(nu_min_ + 1), t);
        const double lt = std::log(t);
        for (std::size_t i = 2; i < size; ++i) {
            const double nu = static_cast<double>(nu_min_) + static_cast<double>(i) - 1.0;
            lh_[i] = log_add(lt + lh_[i - 1], std::log(-nu) + lh_[i - 2]);
        }
    }

    double t() const { return t_; }
    long nu_min() const { return nu_min_; }

    double operator()(long nu) const {
        if (nu > 0 || nu < nu_min_) throw domain_error("HermiteLadder: order outside ladder");
        if (nu == 0) return 0.0;
        return lh_[static_cast<std::size_t>(nu - nu_min_)];
    }

private:
    double t_ = 1.0;
    long nu_min_ = -1;
    std::vector<double> lh_;
};

enum class CoefficientKind { gen_factorial, stirling1, noncentral_gen_factorial, noncentral_stirling1 };

namespace detail {

inline double kind_sigma(CoefficientKind kind, double sigma) {
    if (kind == CoefficientKind::stirling1 || kind == CoefficientKind::noncentral_stirling1) return 0.0;
    if (!(sigma < 1.0) || sigma == 0.0 || !std::isfinite(sigma))
        throw domain_error("generalized factorial coefficients need sigma < 1, sigma != 0");
    return sigma;
}

inline double kind_shift(CoefficientKind kind, double shift) {
    if (kind == CoefficientKind::gen_factorial || kind == CoefficientKind::stirling1) return 0.0;
    return shift;
}

// One step of D(m+1, j) = (m + r - j sigma) D(m, j) + D(m, j-1).
inline std::vector<LogValue> next_row(const std::vector<LogValue>& row, double sigma, double shift) {
    const std::size_t m = row.size() - 1;
    std::vector<LogValue> out(m + 2);
    for (std::size_t j = 0; j <= m + 1; ++j) {
        LogValue v;
        if (j <= m) {
            const double c = static_cast<double>(m) + shift - static_cast<double>(j) * sigma;
            v = LogValue::from_double(c) * row[j];
        }
        if (j >= 1) v = v + row[j - 1];
        out[j] = v;
    }
    return out;
}

}  // namespace detail

/// Row n (entries k = 0..n) of the sigma^k-scaled coefficient array.
///
/// All kinds satisfy D(n+1, k) = (n + shift - k sigma) D(n, k) + D(n, k-1) with D(0,0) = 1.
/// gen_factorial stores C(n,k;sigma)/sigma^k, stirling1 stores |s(n,k)|, and the noncentral
/// kinds carry shift r, so that D_r(n,k) = sum_l binom(n,l) D(l,k) (r)_{n-l}.
inline std::vector<LogValue> coefficient_row(CoefficientKind kind, double sigma, double shift, std::size_t n) {
    sigma = detail::kind_sigma(kind, sigma);
    shift = detail::kind_shift(kind, shift);
    std::vector<LogValue> row{LogValue::one()};
    for (std::size_t m = 0; m < n; ++m) row = detail::next_row(row, sigma, shift);
    return row;
}

class CoefficientTable {
public:
    static constexpr std::size_t max_entries = std::size_t{1} << 25;

    CoefficientTable(CoefficientKind kind, double sigma, double shift, std::size_t n_max)
        : kind_(kind), sigma_(detail::kind_sigma(kind, sigma)), shift_(detail::kind_shift(kind, shift)), n_max_(n_max) {
        if (n_max == 0) throw domain_error("CoefficientTable: n_max must be at least 1");
        const std::size_t entries = (n_max + 1) * (n_max + 2) / 2;
        if (entries > max_entries) throw table_size_exceeded("CoefficientTable: n_max too large for a full table");
        entries_.reserve(entries);
        std::vector<LogValue> row{LogValue::one()};
        entries_.push_back(row[0]);
        for (std::size_t m = 0; m < n_max; ++m) {
            row = detail::next_row(row, sigma_, shift_);
            entries_.insert(entries_.end(), row.begin(), row.end());
        }
    }

    CoefficientKind kind() const { return kind_; }
    double sigma() const { return sigma_; }
    double shift() const { return shift_; }
    std::size_t n_max() const { return n_max_; }

    /// Scaled entry D(n, k).
    const LogValue& at(std::size_t n, std::size_t k) const {
        if (n > n_max_ || k > n) throw domain_error("CoefficientTable: index out of range");
        return entries_[n * (n + 1) / 2 + k];
    }

    /// Unscaled entry sigma^k D(n, k); equals D(n, k) for the Stirling kinds.
    LogValue raw(std::size_t n, std::size_t k) const {
        if (sigma_ == 0.0) return at(n, k);
        const int s = (sigma_ < 0 && k % 2 == 1) ? -1 : 1;
        return at(n, k) * LogValue::from_log(static_cast<double>(k) * std::log(std::fabs(sigma_)), s);
    }

private:
    CoefficientKind kind_;
    double sigma_;
    double shift_;
    std::size_t n_max_;
    std::vector<LogValue> entries_;
};

inline CoefficientTable build_coefficients(CoefficientKind kind, double sigma, double shift, std::size_t n_max) {
    return CoefficientTable(kind, sigma, shift, n_max);
}

/// Noncentral entries from a central table via sum_l binom(n,l) D(l,k) (r)_{n-l}.
inline LogValue convolve_noncentral(const CoefficientTable& central, double shift, std::size_t n, std::size_t k) {
    if (central.kind() != CoefficientKind::gen_factorial && central.kind() != CoefficientKind::stirling1)
        throw domain_error("convolve_noncentral: needs a central table");
    if (!(shift > 0)) throw domain_error("convolve_noncentral: shift must be positive");
    LogValue acc;
    for (std::size_t l = k; l <= n; ++l) {
        const double lw = log_binom(static_cast<double>(n), static_cast<double>(l)) +
                          log_rising(shift, static_cast<double>(n - l));
        acc = acc + central.at(l, k) * LogValue::from_log(lw);
    }
    return acc;
}

/// Process-wide cache of coefficient rows; concurrent readers, exclusive builders.
class CoefficientCache {
public:
    using Row = std::shared_ptr<const std::vector<LogValue>>;

    static CoefficientCache& instance() {
        static CoefficientCache cache;
        return cache;
    }

    Row row(CoefficientKind kind, double sigma, double shift, std::size_t n) {
        const Key key{static_cast<int>(kind), sigma, shift, n};
        {
            std::shared_lock lock(mutex_);
            if (auto it = rows_.find(key); it != rows_.end()) return it->second;
        }
        auto built = std::make_shared<const std::vector<LogValue>>(coefficient_row(kind, sigma, shift, n));
        std::unique_lock lock(mutex_);
        if (rows_.size() >= capacity) rows_.clear();
        return rows_.emplace(key, std::move(built)).first->second;
    }

    void clear() {
        std::unique_lock lock(mutex_);
        rows_.clear();
    }

    static constexpr std::size_t capacity = 64;

private:
    using Key = std::tuple<int, double, double, std::size_t>;
    std::shared_mutex mutex_;
    std::map<Key, Row> rows_;
};

/// Standard normal lower tail.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace biodiv
