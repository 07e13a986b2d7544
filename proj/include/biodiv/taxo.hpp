#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "aldous_pitman.hpp"
#include "apinfer.hpp"
#include "datamodel.hpp"
#include "dpinfer.hpp"
#include "draws.hpp"
#include "errors.hpp"
#include "gibbs.hpp"
#include "sampling.hpp"

namespace biodiv {

/// How branch diversities are set when a new parent appears in simulation.
struct DiversityLaw {
    enum class Kind { fixed, gamma, choice };
    Kind kind = Kind::fixed;
    double value = 1.0;
    double shape = 1.0;
    double rate = 1.0;
    std::vector<double> values;

    static DiversityLaw fixed_at(double v) { return {Kind::fixed, v, 1.0, 1.0, {}}; }
    static DiversityLaw gamma_law(double shape, double rate) { return {Kind::gamma, 1.0, shape, rate, {}}; }
    static DiversityLaw choice_of(std::vector<double> vs) { return {Kind::choice, 1.0, 1.0, 1.0, std::move(vs)}; }

    double draw(Rng& rng) const {
        switch (kind) {
            case Kind::fixed: return value;
            case Kind::gamma: return gamma_draw(rng, shape, rate);
            case Kind::choice: return values[static_cast<std::size_t>(uniform_open(rng) * static_cast<double>(values.size()))];
        }
        return value;
    }
};

/// One taxonomic level: its sigma, the simulation law for branch diversities, and inference settings.
struct LevelSpec {
    double sigma = 0.0;  // -1 (DM), 0 (DP) or 1/2 (AP)
    DiversityLaw diversity = DiversityLaw::fixed_at(1.0);
    AlphaPrior alpha_prior = StirlingGammaSpec{0.3, 0.1, 100};
    GammaHyperprior hyper_init{1.0, 1.0};
    double hyper_prior_sd = 10.0;
    double rho = 1.0;

    GibbsModel model(double diversity) const {
        if (sigma < 0) return GibbsModel::dm(sigma, static_cast<std::uint64_t>(std::llround(diversity)));
        if (sigma == 0) return GibbsModel::dp(diversity);
        return GibbsModel::ap(diversity);
    }
};

struct TaxonomicModelSpec {
    std::vector<LevelSpec> levels;

    void validate() const {
        detail::require(!levels.empty(), "taxonomic spec: need at least one level");
        for (const auto& l : levels) {
            detail::require(l.sigma == -1.0 || l.sigma == 0.0 || l.sigma == 0.5, "taxonomic spec: sigma must be -1, 0 or 1/2");
            detail::require(l.rho > 0 && l.rho <= 1, "taxonomic spec: rho must lie in (0, 1]");
            if (l.diversity.kind == DiversityLaw::Kind::choice)
                detail::require(!l.diversity.values.empty(), "taxonomic spec: empty diversity choice");
        }
    }

    /// Families DP with SG(0.3, 0.1, 100), genera AP with rho = 0.25 on species.
    static TaxonomicModelSpec amazon_default() {
        TaxonomicModelSpec s;
        s.levels.resize(3);
        s.levels[0].sigma = 0.0;
        s.levels[1].sigma = 0.0;
        s.levels[2].sigma = 0.5;
        s.levels[2].rho = 0.25;
        return s;
    }
};

/// Per-level map from parent label ("" for the root) to the diversity of its branch.
using BranchDiversities = std::vector<std::map<std::string, double>>;

struct BranchSufficientStats {
    std::size_t level = 1;
    std::string parent;
    Count n = 0;
    std::size_t k = 0;
    std::vector<Count> abundances;
};

inline std::vector<BranchSufficientStats> branch_stats(const TaxonomicDataset& data) {
    std::vector<BranchSufficientStats> out;
    for (std::size_t level = 1; level <= data.levels(); ++level) {
        const auto parents = level == 1 ? std::vector<const TaxonNode*>{&data.root()} : data.nodes_at(level - 1);
        for (const TaxonNode* x : parents) {
            BranchSufficientStats b{level, x->label, x->count, x->k(), {}};
            for (const auto& c : x->children) b.abundances.push_back(c.count);
            std::sort(b.abundances.rbegin(), b.abundances.rend());
            out.push_back(std::move(b));
        }
    }
    return out;
}

namespace detail {

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t branch_stream(std::size_t level, const std::string& label) {
    return fnv1a(label, fnv1a(std::to_string(level) + ":"));
}

class BranchUrn {
public:
    BranchUrn(const GibbsModel& model, double sigma) : model_(model), weights_(model, 1), sigma_(sigma) {
        if (model.is_ap()) latent_.emplace(model.gamma());
    }

    // Returns the child index and whether it is new.
    std::pair<std::uint32_t, bool> draw(Rng& rng) {
        const std::uint64_t n = obs_.size(), k = counts_.size();
        bool fresh;
        if (n == 0) fresh = true;
        else if (latent_) fresh = latent_->step_new(n, k, rng);
        else fresh = uniform_open(rng) < weights_.p_new(n, k);
        std::uint32_t label;
        if (fresh) {
            label = static_cast<std::uint32_t>(k);
            counts_.push_back(1);
        } else {
            label = choose_existing(sigma_, obs_, counts_, rng);
            ++counts_[label];
        }
        obs_.push_back(label);
        return {label, fresh};
    }

private:
    GibbsModel model_;
    LogWeights weights_;
    double sigma_;
    std::optional<APLatentCache> latent_;
    std::vector<std::uint32_t> obs_;
    std::vector<Count> counts_;
};

}  // namespace detail

struct NestedUrnSample {
    TaxonomicDataset data;
    BranchDiversities diversities;
};

/// Sequential nested urn: each observation picks a level-1 taxon, then a child within
/// the branch of its parent at every deeper level. A new parent always yields new children.
/// Returns the label path of every observation in draw order.
inline std::vector<TaxonomicDataset::Path> nested_urn_paths(const TaxonomicModelSpec& spec, std::uint64_t n_steps, Rng& rng,
                                                            Rng& diversity_rng, BranchDiversities& diversities) {
    spec.validate();
    const std::size_t L = spec.levels.size();
    diversities.assign(L, {});
    std::vector<std::map<std::string, detail::BranchUrn>> urns(L);
    std::vector<std::map<std::string, std::vector<std::string>>> child_labels(L);
    std::vector<std::size_t> next_id(L, 0);

    auto branch = [&](std::size_t l, const std::string& parent) -> detail::BranchUrn& {
        auto it = urns[l].find(parent);
        if (it == urns[l].end()) {
            const double d = spec.levels[l].diversity.draw(diversity_rng);
            diversities[l][parent] = d;
            it = urns[l].emplace(parent, detail::BranchUrn(spec.levels[l].model(d), spec.levels[l].sigma)).first;
        }
        return it->second;
    };

    std::vector<TaxonomicDataset::Path> paths;
    paths.reserve(n_steps);
    for (std::uint64_t i = 0; i < n_steps; ++i) {
        TaxonomicDataset::Path path;
        std::string parent;
        for (std::size_t l = 0; l < L; ++l) {
            auto [child, fresh] = branch(l, parent).draw(rng);
            auto& labels = child_labels[l][parent];
            if (fresh) labels.push_back("L" + std::to_string(l + 1) + "_" + std::to_string(next_id[l]++));
            parent = labels[child];
            path.push_back(parent);
        }
        paths.push_back(std::move(path));
    }
    return paths;
}

inline NestedUrnSample nested_urn_sample(const TaxonomicModelSpec& spec, std::uint64_t n_steps, std::uint64_t seed) {
    detail::require(n_steps >= 1, "nested_urn_sample: need at least one step");
    Rng rng = make_rng(seed);
    Rng div_rng = make_rng(seed, 1);
    NestedUrnSample out;
    std::map<TaxonomicDataset::Path, Count> tally;
    for (auto& p : nested_urn_paths(spec, n_steps, rng, div_rng, out.diversities)) ++tally[p];
    std::vector<std::pair<TaxonomicDataset::Path, Count>> rows(tally.begin(), tally.end());
    out.data = TaxonomicDataset::from_rows(rows, spec.levels.size());
    return out;
}

namespace detail {

inline double branch_diversity(const TaxonomicModelSpec& spec, const BranchDiversities& div, std::size_t level,
                               const std::string& parent) {
    if (level - 1 < div.size()) {
        auto it = div[level - 1].find(parent);
        if (it != div[level - 1].end()) return it->second;
    }
    const auto& law = spec.levels[level - 1].diversity;
    require(law.kind == DiversityLaw::Kind::fixed, "log_taxonomic_likelihood: no diversity for branch '" + parent + "'");
    return law.value;
}

}  // namespace detail

/// Sum over observed branches of rho_l times the branch partition log-probability.
inline double log_taxonomic_likelihood(const TaxonomicModelSpec& spec, const TaxonomicDataset& data,
                                       const BranchDiversities& diversities = {}) {
    spec.validate();
    detail::require(spec.levels.size() == data.levels(), "log_taxonomic_likelihood: spec depth differs from data");
    double total = 0.0;
    for (const auto& b : branch_stats(data)) {
        const auto& lv = spec.levels[b.level - 1];
        const double d = detail::branch_diversity(spec, diversities, b.level, b.parent);
        total += lv.rho * log_eppf(lv.model(d), PartitionData(b.abundances));
    }
    return total;
}

/// Runs f(i) for i in [0, n) on up to `threads` workers; the first exception is rethrown.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& f) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                f(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next = n;
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(threads, n); ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

struct McmcOptions {
    std::size_t iters = 10000;
    std::size_t burn_in = 1000;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
};

struct BranchPosterior {
    std::size_t level = 1;
    std::string parent;
    Count n = 0;
    std::size_t k = 0;
    bool prior_only = false;
    PosteriorDraws draws;
};

struct HyperparameterChain {
    std::size_t level = 1;
    PosteriorDraws shape;
    PosteriorDraws rate;
    double acceptance_rate = 0.0;
    double proposal_scale = 0.0;
};

struct TaxonomicFit {
    std::vector<BranchPosterior> branches;
    std::vector<HyperparameterChain> hyper;
    bool converged = true;
};

namespace detail {

inline HyperparameterChain fit_ap_level(const LevelSpec& lv, std::vector<BranchPosterior*>& branches, const McmcOptions& mc,
                                        std::size_t level) {
    const std::size_t kept = mc.iters - mc.burn_in;
    std::vector<Rng> rngs;
    std::vector<APAugmentedState> states;
    std::vector<std::size_t> informative;
    for (auto* b : branches) {
        rngs.push_back(make_rng(mc.seed, branch_stream(level, b->parent)));
        const double n = static_cast<double>(b->n), k = static_cast<double>(b->k);
        APAugmentedState s{std::max(k, 1.0) / std::sqrt(std::max(n, 1.0)), std::sqrt(2 * std::max(n, 1.0)), std::max<Count>(b->n, 2),
                           std::max<std::size_t>(b->k, 1), lv.rho};
        states.push_back(s);
        if (!b->prior_only) informative.push_back(states.size() - 1);
        b->draws.quantity = "gamma";
        b->draws.rho = lv.rho;
        b->draws.values.reserve(kept);
    }
    Rng hyper_rng = make_rng(mc.seed, fnv1a("hyper:" + std::to_string(level)));
    double la = std::log(lv.hyper_init.shape), lb = std::log(lv.hyper_init.rate);
    const double var = lv.hyper_prior_sd * lv.hyper_prior_sd;
    auto log_target = [&](double xa, double xb) {
        const double a = std::exp(xa), b = std::exp(xb);
        double s = -0.5 * (xa * xa + xb * xb) / var;
        for (std::size_t i : informative) {
            const double g = states[i].gamma;
            s += a * xb - std::lgamma(a) + (a - 1) * std::log(g) - b * g;
        }
        return s;
    };
    double log_scale = std::log(0.5);
    std::size_t accepted = 0;
    HyperparameterChain chain;
    chain.level = level;
    chain.shape.quantity = "a_gamma";
    chain.rate.quantity = "b_gamma";
    std::normal_distribution<double> z;
    for (std::size_t t = 0; t < mc.iters; ++t) {
        const GammaHyperprior prior{std::exp(la), std::exp(lb)};
        parallel_for(states.size(), mc.threads, [&](std::size_t i) {
            if (branches[i]->prior_only) states[i].gamma = gamma_draw(rngs[i], prior.shape, prior.rate);
            else states[i] = gibbs_sweep(states[i], prior, rngs[i]);
        });
        const double step = std::exp(log_scale);
        const double pa = la + step * z(hyper_rng), pb = lb + step * z(hyper_rng);
        const bool accept = std::log(uniform_open(hyper_rng)) < log_target(pa, pb) - log_target(la, lb);
        if (accept) {
            la = pa;
            lb = pb;
        }
        if (t < mc.burn_in) {
            log_scale += ((accept ? 1.0 : 0.0) - 0.3) / std::pow(static_cast<double>(t + 1), 0.6);
            continue;
        }
        accepted += accept;
        chain.shape.values.push_back(std::exp(la));
        chain.rate.values.push_back(std::exp(lb));
        for (std::size_t i = 0; i < states.size(); ++i) branches[i]->draws.values.push_back(states[i].gamma);
    }
    chain.acceptance_rate = kept ? static_cast<double>(accepted) / static_cast<double>(kept) : 0.0;
    chain.proposal_scale = std::exp(log_scale);
    chain.shape.diagnostics = diagnose(chain.shape.values, 1, kept);
    chain.rate.diagnostics = diagnose(chain.rate.values, 1, kept);
    for (auto* b : branches) b->draws.diagnostics = diagnose(b->draws.values, 1, kept);
    return chain;
}

}  // namespace detail

/// Posterior for every branch diversity. DP levels use independent per-branch
/// coarsened posteriors; AP levels run a Gibbs sampler with Metropolis updates
/// of the shared Gamma hyperparameters on the log scale.
inline TaxonomicFit fit_taxonomic(const TaxonomicModelSpec& spec, const TaxonomicDataset& data, const McmcOptions& mc = {}) {
    spec.validate();
    detail::require(spec.levels.size() == data.levels(), "fit_taxonomic: spec depth differs from data");
    detail::require(mc.iters > mc.burn_in, "fit_taxonomic: iterations must exceed burn-in");
    for (const auto& l : spec.levels) detail::require(l.sigma >= 0, "fit_taxonomic: only DP and AP levels can be fitted");
    const std::size_t kept = mc.iters - mc.burn_in;

    TaxonomicFit fit;
    for (auto& b : branch_stats(data)) {
        BranchPosterior p;
        p.level = b.level;
        p.parent = b.parent;
        p.n = b.n;
        p.k = b.k;
        p.prior_only = b.n < 2;
        fit.branches.push_back(std::move(p));
    }

    std::vector<std::size_t> dp_branches;
    for (std::size_t i = 0; i < fit.branches.size(); ++i)
        if (spec.levels[fit.branches[i].level - 1].sigma == 0.0) dp_branches.push_back(i);
    parallel_for(dp_branches.size(), mc.threads, [&](std::size_t j) {
        auto& b = fit.branches[dp_branches[j]];
        const auto& lv = spec.levels[b.level - 1];
        const CoarsenedPosterior post{lv.alpha_prior, b.n, b.k, lv.rho};
        b.draws = sg_posterior_sample(post, kept, mc.seed ^ detail::branch_stream(b.level, b.parent));
    });

    for (std::size_t level = 1; level <= spec.levels.size(); ++level) {
        if (spec.levels[level - 1].sigma != 0.5) continue;
        std::vector<BranchPosterior*> members;
        for (auto& b : fit.branches)
            if (b.level == level) members.push_back(&b);
        std::sort(members.begin(), members.end(), [](auto* x, auto* y) { return x->parent < y->parent; });
        fit.hyper.push_back(detail::fit_ap_level(spec.levels[level - 1], members, mc, level));
    }
    for (const auto& b : fit.branches) fit.converged = fit.converged && b.draws.diagnostics.converged;
    for (const auto& h : fit.hyper)
        fit.converged = fit.converged && h.shape.diagnostics.converged && h.rate.diagnostics.converged;
    return fit;
}

struct BranchSummary {
    std::size_t level = 1;
    std::string parent;
    double mean = 0.0;
    double q01 = 0.0;
    double q99 = 0.0;
    Count n = 0;
    std::size_t k = 0;
    bool prior_only = false;
};

/// Posterior mean and 98% interval per branch, ranked by mean within each level.
inline std::vector<BranchSummary> branch_summaries(const TaxonomicFit& fit) {
    std::vector<BranchSummary> out;
    for (const auto& b : fit.branches) {
        const auto s = summarize(b.draws.values);
        out.push_back({b.level, b.parent, s.mean, s.quantiles[0], s.quantiles[4], b.n, b.k, b.prior_only});
    }
    std::stable_sort(out.begin(), out.end(), [](const BranchSummary& x, const BranchSummary& y) {
        if (x.level != y.level) return x.level < y.level;
        if (x.mean != y.mean) return x.mean > y.mean;
        return x.parent < y.parent;
    });
    return out;
}

}  // namespace biodiv
