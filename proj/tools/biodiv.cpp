#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "biodiv/apinfer.hpp"
#include "biodiv/datamodel.hpp"
#include "biodiv/dpinfer.hpp"
#include "biodiv/errors.hpp"
#include "biodiv/estimators.hpp"
#include "biodiv/gibbs.hpp"
#include "biodiv/taxo.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace biodiv;

namespace {

enum ExitCode { ok = 0, parse_failure = 2, domain_failure = 3, convergence_failure = 4, internal_failure = 5 };

struct Options {
    std::string input;
    std::string output_dir = ".";
    std::string format = "csv";
    std::optional<std::uint64_t> seed;
    std::size_t threads = 1;
    std::vector<double> rho{1.0};
    std::string family;
    std::optional<double> alpha, gamma, sigma;
    std::optional<std::uint64_t> H;
    std::vector<double> sg;
    std::vector<double> gamma_prior;
    std::optional<double> py, ig;
    std::size_t mcmc_iters = 10000;
    std::size_t burn_in = 1000;
    std::size_t replicates = 1000;
    bool strict = false;

    // command-specific
    std::optional<double> n_hat;
    double n_spread = 0.5;
    std::uint64_t m = 0;
    std::uint64_t n = 0;
    std::size_t points = 100;
    std::uint64_t r_max = 50;
    std::vector<std::string> levels;
    std::vector<std::string> level_family;
    std::vector<double> level_rho;
};

std::string fmt(double x, int digits) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, x);
    return buf;
}

// Draws and curve values keep full precision; posterior summaries and Monte Carlo errors use 6 digits.
std::string draw_str(double x) { return fmt(x, 17); }
std::string summ_str(double x) { return fmt(x, 6); }

// JSON number carrying the same digits as the CSV rendering.
json summ_num(double x) {
    if (!std::isfinite(x)) return nullptr;
    return std::stod(summ_str(x));
}

class Output {
public:
    Output(const Options& o, json config) : dir_(o.output_dir), json_(o.format == "json"), config_(std::move(config)) {
        fs::create_directories(dir_);
    }

    bool json_format() const { return json_; }
    const json& config() const { return config_; }

    // Writes a table as CSV (with a config comment line) or as JSON records.
    void table(const std::string& stem, const std::vector<std::string>& columns,
               const std::vector<std::vector<std::string>>& rows) const {
        if (json_) {
            json doc;
            doc["config"] = config_;
            doc["columns"] = columns;
            json data = json::array();
            for (const auto& r : rows) {
                json rec = json::array();
                for (const auto& cell : r) rec.push_back(as_json(cell));
                data.push_back(std::move(rec));
            }
            doc["rows"] = std::move(data);
            document(stem, doc);
            return;
        }
        std::ofstream out = open(stem + ".csv");
        out << "# config: " << config_.dump() << '\n';
        for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
        out << '\n';
        for (const auto& r : rows) {
            for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
            out << '\n';
        }
    }

    void document(const std::string& stem, json doc) const {
        if (!doc.contains("config")) {
            json with{{"config", config_}};
            for (auto& [key, v] : doc.items()) with[key] = v;
            doc = std::move(with);
        }
        std::ofstream out = open(stem + ".json");
        out << doc.dump(2) << '\n';
    }

    template <class Writer>
    void raw_csv(const std::string& stem, Writer&& write) const {
        std::ofstream out = open(stem + ".csv");
        out << "# config: " << config_.dump() << '\n';
        write(out);
    }

private:
    std::ofstream open(const std::string& name) const {
        const auto path = fs::path(dir_) / name;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
        return out;
    }

    static json as_json(const std::string& cell) {
        if (cell == "true") return true;
        if (cell == "false") return false;
        if (cell == "nan" || cell == "inf" || cell == "-inf") return nullptr;
        char* end = nullptr;
        const double v = std::strtod(cell.c_str(), &end);
        if (!cell.empty() && end == cell.c_str() + cell.size()) {
            if (cell.find_first_of(".eE") == std::string::npos && cell.front() != '-') return std::stoull(cell);
            return v;
        }
        return cell;
    }

    std::string dir_;
    bool json_;
    json config_;
};

std::string yes_no(bool b) { return b ? "true" : "false"; }

std::uint64_t require_seed(const Options& o, const std::string& cmd) {
    if (!o.seed) throw CLI::RequiredError(cmd + ": --seed is required for stochastic commands");
    return *o.seed;
}

double single_rho(const Options& o, const std::string& cmd) {
    if (o.rho.size() != 1) throw CLI::ValidationError("--rho", cmd + " takes a single rho value");
    return o.rho.front();
}

json base_config(const std::string& cmd, const Options& o) {
    json c;
    c["subcommand"] = cmd;
    c["input"] = o.input;
    c["output_dir"] = o.output_dir;
    c["format"] = o.format;
    c["seed"] = o.seed ? json(*o.seed) : json(nullptr);
    c["threads"] = o.threads;
    c["rho"] = o.rho;
    return c;
}

PartitionData load_abundance(const Options& o) {
    if (o.input.empty()) throw CLI::RequiredError("--input");
    return ingest_abundance_csv(o.input);
}

std::size_t taxonomy_depth(const std::string& path) {
    auto in = csv::open(path);
    auto [header, rows] = csv::read(in);
    if (header.fields.size() < 3) throw parse_error("taxonomy file needs at least two levels plus a count column");
    return header.fields.size() - 1;
}

// DP prior on alpha from --sg or --gamma-prior; `fallback` applies when neither is given.
AlphaPrior dp_prior(const Options& o, std::uint64_t n, const StirlingGammaSpec& fallback, json& cfg) {
    if (!o.gamma_prior.empty()) {
        cfg["prior"] = {{"kind", "gamma"}, {"shape", o.gamma_prior[0]}, {"rate", o.gamma_prior[1]}};
        return GammaAlphaPrior{o.gamma_prior[0], o.gamma_prior[1]};
    }
    StirlingGammaSpec sg = fallback;
    if (!o.sg.empty()) {
        sg.a = o.sg[0];
        sg.b = o.sg[1];
        sg.n_ref = o.sg.size() == 3 ? static_cast<std::uint64_t>(std::llround(o.sg[2])) : n;
    }
    cfg["prior"] = {{"kind", "stirling_gamma"}, {"a", sg.a}, {"b", sg.b}, {"n_ref", sg.n_ref}};
    return sg;
}

// Model from --family and its parameter; DP and AP parameters default to the ML estimate from the data.
GibbsModel model_from(const Options& o, const PartitionData* data, json& cfg) {
    const std::string fam = o.family.empty() ? "dp" : o.family;
    cfg["family"] = fam;
    if (fam == "dm") {
        if (!o.H) throw CLI::RequiredError("--H (required for the dm family)");
        const double s = o.sigma.value_or(-1.0);
        cfg["sigma"] = s;
        cfg["H"] = *o.H;
        return GibbsModel::dm(s, *o.H);
    }
    if (fam == "dp") {
        double a;
        if (o.alpha) a = *o.alpha;
        else if (data) a = mle_alpha(data->n(), data->k()).value;
        else throw CLI::RequiredError("--alpha");
        cfg["alpha"] = a;
        cfg["alpha_source"] = o.alpha ? "given" : "ml";
        return GibbsModel::dp(a);
    }
    double g;
    if (o.gamma) g = *o.gamma;
    else if (data) g = mle_gamma(data->n(), data->k()).value;
    else throw CLI::RequiredError("--gamma");
    cfg["gamma"] = g;
    cfg["gamma_source"] = o.gamma ? "given" : "ml";
    return GibbsModel::ap(g);
}

std::vector<std::string> quantile_columns() { return {"q01", "q25", "q50", "q75", "q99"}; }

json summary_json(const Summary& s) {
    json q;
    const auto names = quantile_columns();
    for (std::size_t i = 0; i < names.size(); ++i) q[names[i]] = summ_num(s.quantiles[i]);
    return {{"mean", summ_num(s.mean)}, {"quantiles", q}};
}

json diagnostics_json(const SamplerDiagnostics& d) {
    return {{"lag1_autocorrelation", summ_num(d.lag1_autocorrelation)},
            {"effective_sample_size", summ_num(d.effective_sample_size)},
            {"thin", d.thin},
            {"converged", d.converged}};
}

int finish(const Options& o, bool converged, const std::string& what) {
    if (converged) return ok;
    std::cerr << "warning: " << what << " did not pass the convergence diagnostics\n";
    return o.strict ? convergence_failure : ok;
}

int cmd_fit(const Options& o) {
    json cfg = base_config("fit", o);
    const auto data = load_abundance(o);
    const std::uint64_t seed = require_seed(o, "fit");
    const std::string fam = o.family.empty() ? "dp" : o.family;
    if (fam == "dm") throw CLI::ValidationError("--family", "fit supports dp and ap");
    cfg["family"] = fam;
    cfg["draws"] = o.mcmc_iters;
    const Count n = data.n();
    const std::size_t k = data.k();

    json estimates = json::array();
    std::vector<std::vector<std::string>> est_rows;
    auto add_estimate = [&](const std::string& name, const AlphaEstimate& e) {
        est_rows.push_back({name, summ_str(e.value), std::to_string(e.iterations), summ_str(e.residual)});
        estimates.push_back({{"method", name}, {"value", summ_num(e.value)}});
    };
    std::string quantity;
    std::vector<PosteriorDraws> posts;
    if (fam == "dp") {
        quantity = "alpha";
        add_estimate("fisher", fisher_alpha(n, k));
        add_estimate("ml", mle_alpha(n, k));
        const AlphaPrior prior = dp_prior(o, n, StirlingGammaSpec{1.0, 0.0002, n}, cfg);
        for (double r : o.rho) posts.push_back(sg_posterior_sample(CoarsenedPosterior{prior, n, k, r}, o.mcmc_iters, seed));
    } else {
        quantity = "gamma";
        add_estimate("ml", mle_gamma(n, k));
        for (double r : o.rho) {
            if (o.py) {
                cfg["prior"] = {{"kind", "pitman_yor"}, {"theta", *o.py}};
                posts.push_back(ap_posterior_sample(n, k, PitmanYorPrior{*o.py}, o.mcmc_iters, seed, r));
            } else if (o.ig) {
                cfg["prior"] = {{"kind", "inverse_gaussian"}, {"beta", *o.ig}};
                posts.push_back(ap_posterior_sample(n, k, InverseGaussianPrior{*o.ig}, o.mcmc_iters, seed, r));
            } else {
                const double a = o.gamma_prior.empty() ? 1.0 : o.gamma_prior[0];
                const double b = o.gamma_prior.empty() ? 1.0 : o.gamma_prior[1];
                cfg["prior"] = {{"kind", "gamma"}, {"shape", a}, {"rate", b}};
                posts.push_back(iid_two_step_sample(n, k, a, b, o.mcmc_iters, seed, r));
            }
        }
    }

    const Output out(o, cfg);
    out.table("fit_estimates", {"method", "value", "iterations", "residual"}, est_rows);

    std::vector<std::vector<std::string>> draw_rows;
    for (const auto& p : posts)
        for (std::size_t i = 0; i < p.values.size(); ++i) draw_rows.push_back({summ_str(p.rho), std::to_string(i + 1), draw_str(p.values[i])});
    out.table("fit_draws", {"rho", "draw", quantity}, draw_rows);

    json rows = json::array();
    bool converged = true;
    for (const auto& p : posts) {
        json row{{"rho", p.rho}};
        row.update(summary_json(summarize(p.values)));
        if (fam == "dp") {
            const auto t = diversity_transforms(p.values);
            row["simpson_mean"] = summ_num(t.simpson_mean);
            row["shannon_mean"] = summ_num(t.shannon_mean);
        }
        row["diagnostics"] = diagnostics_json(p.diagnostics);
        converged = converged && p.diagnostics.converged;
        rows.push_back(std::move(row));
    }
    out.document("fit_summary", {{"quantity", quantity}, {"n", n}, {"k", k}, {"estimates", estimates}, {"posterior", rows}});
    return finish(o, converged, "posterior sampler");
}

std::vector<std::uint64_t> log_grid(std::uint64_t n, std::size_t count) {
    std::vector<std::uint64_t> pts;
    const std::size_t c = std::max<std::size_t>(count, 2);
    for (std::size_t i = 0; i < c; ++i) {
        const double x = std::exp(std::log(static_cast<double>(n)) * static_cast<double>(i) / static_cast<double>(c - 1));
        pts.push_back(std::clamp<std::uint64_t>(static_cast<std::uint64_t>(std::llround(x)), 1, n));
    }
    pts.push_back(n);
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    return pts;
}

int cmd_validate(const Options& o) {
    json cfg = base_config("validate", o);
    const auto data = load_abundance(o);
    const std::uint64_t seed = require_seed(o, "validate");
    const GibbsModel model = model_from(o, &data, cfg);
    const Count n = data.n();
    const std::uint64_t r_max = std::min<std::uint64_t>(o.r_max, n);
    cfg["replicates"] = o.replicates;
    cfg["points"] = o.points;
    cfg["r_max"] = r_max;
    const Output out(o, cfg);
    const MonteCarloOptions mc{o.replicates, seed};

    const auto pts = log_grid(n, o.points);
    const auto classical = classical_rarefaction(data, pts);
    const auto curve = rarefaction(model, n, mc);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t j = 0; j < pts.size(); ++j) {
        const auto& c = curve[pts[j] - 1];
        rows.push_back({std::to_string(pts[j]), draw_str(classical[j].value), draw_str(c.value), summ_str(c.se)});
    }
    out.table("validate_rarefaction", {"i", "classical", "model", "model_se"}, rows);

    const auto freq = expected_freq_counts(model, n, r_max, {o.replicates, seed + 1});
    rows.clear();
    for (std::uint64_t r = 1; r <= r_max; ++r)
        rows.push_back({std::to_string(r), std::to_string(data.m(r)), draw_str(freq[r - 1])});
    out.table("validate_freq_counts", {"r", "observed", "expected"}, rows);

    const auto rad = expected_rank_abundance(model, n, data.k(), {o.replicates, seed + 2});
    rows.clear();
    for (std::size_t r = 0; r < data.k(); ++r)
        rows.push_back({std::to_string(r + 1), std::to_string(data.abundances()[r]), draw_str(rad[r].value), summ_str(rad[r].se)});
    out.table("validate_rad", {"rank", "observed", "expected", "expected_se"}, rows);
    return ok;
}

int cmd_richness(const Options& o) {
    json cfg = base_config("richness", o);
    const auto data = load_abundance(o);
    const std::uint64_t seed = require_seed(o, "richness");
    if (!o.n_hat) throw CLI::RequiredError("--n-hat");
    const Count n = data.n();
    const std::size_t k = data.k();
    const AlphaPrior prior = dp_prior(o, n, StirlingGammaSpec{1.0, 0.0002, n}, cfg);
    cfg["n_hat"] = *o.n_hat;
    cfg["n_spread"] = o.n_spread;
    cfg["draws"] = o.mcmc_iters;
    const Output out(o, cfg);

    std::vector<std::vector<std::string>> draw_rows;
    json rows = json::array();
    bool converged = true;
    for (double r : o.rho) {
        const auto pred = richness_posterior(CoarsenedPosterior{prior, n, k, r}, *o.n_hat, o.mcmc_iters, seed, o.n_spread);
        for (std::size_t i = 0; i < pred.draws.size(); ++i)
            draw_rows.push_back({summ_str(r), std::to_string(i + 1), draw_str(pred.alpha[i]), std::to_string(pred.population[i]),
                                 std::to_string(pred.draws[i])});
        rows.push_back({{"rho", r},
                        {"K_N", summary_json(summarize(pred.values()))},
                        {"alpha", summary_json(summarize(pred.alpha))},
                        {"diagnostics", diagnostics_json(pred.diagnostics)}});
        converged = converged && pred.diagnostics.converged;
    }
    out.table("richness_draws", {"rho", "draw", "alpha", "N", "K_N"}, draw_rows);
    out.document("richness_summary", {{"n", n}, {"k", k}, {"posterior", rows}});
    return finish(o, converged, "posterior sampler");
}

int cmd_extrapolate(const Options& o) {
    json cfg = base_config("extrapolate", o);
    const auto data = load_abundance(o);
    if (o.m < 1) throw CLI::RequiredError("--m");
    const GibbsModel model = model_from(o, &data, cfg);
    std::uint64_t seed = 0;
    if (model.is_ap()) seed = require_seed(o, "extrapolate (ap family)");
    cfg["m"] = o.m;
    cfg["replicates"] = o.replicates;
    const Output out(o, cfg);
    const auto curve = extrapolation(model, data.n(), data.k(), o.m, {o.replicates, seed});
    std::vector<std::vector<std::string>> rows;
    for (const auto& p : curve) rows.push_back({std::to_string(p.i), draw_str(p.value), summ_str(p.se)});
    out.table("extrapolate_curve", {"i", "value", "se"}, rows);
    return ok;
}

TaxonomicModelSpec taxonomic_spec(const Options& o, std::size_t L, json& cfg) {
    std::vector<std::string> fam = o.level_family;
    if (fam.empty()) {
        fam.assign(L, "dp");
        fam.back() = "ap";
    }
    if (fam.size() != L) throw CLI::ValidationError("--level-family", "needs one entry per level");
    std::vector<double> rho = o.level_rho;
    if (rho.empty()) rho.assign(L, single_rho(o, "taxonomic"));
    if (rho.size() != L) throw CLI::ValidationError("--level-rho", "needs one entry per level");
    TaxonomicModelSpec spec;
    spec.levels.resize(L);
    if (!o.sg.empty() && o.sg.size() != 3) throw CLI::ValidationError("--sg", "taxonomic fits need a b nref");
    json prior_cfg;
    const AlphaPrior prior = dp_prior(o, 0, StirlingGammaSpec{0.3, 0.1, 100}, prior_cfg);
    for (std::size_t l = 0; l < L; ++l) {
        if (fam[l] == "dp") spec.levels[l].sigma = 0.0;
        else if (fam[l] == "ap") spec.levels[l].sigma = 0.5;
        else throw CLI::ValidationError("--level-family", "entries must be dp or ap");
        spec.levels[l].alpha_prior = prior;
        spec.levels[l].rho = rho[l];
    }
    cfg["level_family"] = fam;
    cfg["level_rho"] = rho;
    cfg["dp_prior"] = prior_cfg["prior"];
    cfg["mcmc_iters"] = o.mcmc_iters;
    cfg["burn_in"] = o.burn_in;
    return spec;
}

int cmd_taxonomic(const Options& o) {
    json cfg = base_config("taxonomic", o);
    if (o.input.empty()) throw CLI::RequiredError("--input");
    const std::uint64_t seed = require_seed(o, "taxonomic");
    const std::size_t L = taxonomy_depth(o.input);
    const auto data = ingest_taxonomy_csv(o.input, L);
    cfg["levels"] = L;
    const auto spec = taxonomic_spec(o, L, cfg);
    const auto fit = fit_taxonomic(spec, data, McmcOptions{o.mcmc_iters, o.burn_in, seed, o.threads});
    const Output out(o, cfg);

    std::vector<std::vector<std::string>> rows;
    for (const auto& s : branch_summaries(fit))
        rows.push_back({std::to_string(s.level), s.parent.empty() ? "(root)" : s.parent, std::to_string(s.n), std::to_string(s.k),
                        yes_no(s.prior_only), summ_str(s.mean), summ_str(s.q01), summ_str(s.q99)});
    out.table("taxonomic_summary", {"level", "parent", "n", "k", "prior_only", "mean", "q01", "q99"}, rows);

    rows.clear();
    for (const auto& h : fit.hyper)
        rows.push_back({std::to_string(h.level), summ_str(mean_of(h.shape.values)), summ_str(mean_of(h.rate.values)),
                        summ_str(h.acceptance_rate), summ_str(h.proposal_scale)});
    out.table("taxonomic_hyper", {"level", "shape_mean", "rate_mean", "acceptance_rate", "proposal_scale"}, rows);

    rows.clear();
    for (const auto& b : fit.branches)
        for (std::size_t i = 0; i < b.draws.values.size(); ++i)
            rows.push_back({std::to_string(b.level), b.parent.empty() ? "(root)" : b.parent, std::to_string(i + 1),
                            draw_str(b.draws.values[i])});
    out.table("taxonomic_draws", {"level", "parent", "draw", "value"}, rows);
    return finish(o, fit.converged, "taxonomic sampler");
}

std::vector<double> parse_numbers(const std::vector<std::string>& parts, std::size_t from, const std::string& spec) {
    std::vector<double> v;
    for (std::size_t i = from; i < parts.size(); ++i) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(parts[i], &used));
            if (used != parts[i].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw CLI::ValidationError("--level", "bad number in '" + spec + "'");
        }
    }
    return v;
}

// FAMILY:KIND:VALUES, e.g. dp:fixed:5, ap:gamma:2:1, dm:choice:5:10.
LevelSpec parse_level(const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() < 3) throw CLI::ValidationError("--level", "expected FAMILY:KIND:VALUES, got '" + text + "'");
    LevelSpec l;
    if (parts[0] == "dm") l.sigma = -1.0;
    else if (parts[0] == "dp") l.sigma = 0.0;
    else if (parts[0] == "ap") l.sigma = 0.5;
    else throw CLI::ValidationError("--level", "family must be dm, dp or ap in '" + text + "'");
    const auto v = parse_numbers(parts, 2, text);
    if (parts[1] == "fixed" && v.size() == 1) l.diversity = DiversityLaw::fixed_at(v[0]);
    else if (parts[1] == "gamma" && v.size() == 2) l.diversity = DiversityLaw::gamma_law(v[0], v[1]);
    else if (parts[1] == "choice" && !v.empty()) l.diversity = DiversityLaw::choice_of(v);
    else throw CLI::ValidationError("--level", "kind must be fixed:v, gamma:shape:rate or choice:v1:v2:... in '" + text + "'");
    for (double x : v) detail::require(x > 0 && std::isfinite(x), "--level: diversity values must be positive");
    if (l.sigma < 0 && l.diversity.kind == DiversityLaw::Kind::gamma)
        throw CLI::ValidationError("--level", "dm levels need integer H (fixed or choice)");
    return l;
}

int cmd_simulate(const Options& o) {
    json cfg = base_config("simulate", o);
    const std::uint64_t seed = require_seed(o, "simulate");
    if (o.n < 1) throw CLI::RequiredError("--n");
    cfg["n"] = o.n;
    if (!o.levels.empty()) {
        TaxonomicModelSpec spec;
        for (const auto& t : o.levels) spec.levels.push_back(parse_level(t));
        cfg["levels"] = o.levels;
        const auto s = nested_urn_sample(spec, o.n, seed);
        const Output out(o, cfg);
        if (out.json_format()) {
            json rows = json::array();
            for (const auto& [path, count] : s.data.rows()) rows.push_back({{"path", path}, {"count", count}});
            out.document("simulate_taxonomy", {{"rows", rows}});
        } else {
            out.raw_csv("simulate_taxonomy", [&](std::ostream& os) { write_taxonomy_csv(os, s.data); });
        }
        std::vector<std::vector<std::string>> rows;
        for (std::size_t l = 0; l < s.diversities.size(); ++l)
            for (const auto& [parent, d] : s.diversities[l])
                rows.push_back({std::to_string(l + 1), parent.empty() ? "(root)" : parent, draw_str(d)});
        out.table("simulate_diversities", {"level", "parent", "diversity"}, rows);
        return ok;
    }
    const GibbsModel model = model_from(o, nullptr, cfg);
    Rng rng = make_rng(seed);
    const PartitionData data(urn_counts(model, o.n, rng));
    const Output out(o, cfg);
    if (out.json_format()) out.document("simulate_abundance", {{"n", data.n()}, {"k", data.k()}, {"abundances", data.abundances()}});
    else out.raw_csv("simulate_abundance", [&](std::ostream& os) { write_abundance_csv(os, data); });
    return ok;
}

void add_common(CLI::App* app, Options& o) {
    app->add_option("--input", o.input, "Input CSV file");
    app->add_option("--output-dir", o.output_dir, "Directory for output files")->capture_default_str();
    app->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
    app->add_option("--seed", o.seed, "Random seed (required for stochastic commands)");
    app->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--rho", o.rho, "Coarsening level(s) in (0, 1]")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    app->add_option("--family", o.family, "Model family")->check(CLI::IsMember({"dm", "dp", "ap"}));
    app->add_option("--alpha", o.alpha, "DP precision");
    app->add_option("--gamma", o.gamma, "Aldous-Pitman diversity");
    app->add_option("--sigma", o.sigma, "DM discount (negative)");
    app->add_option("--H", o.H, "DM number of taxa");
    app->add_option("--sg", o.sg, "Stirling-gamma prior: a b [nref]")->expected(2, 3);
    app->add_option("--gamma-prior", o.gamma_prior, "Gamma prior: shape rate")->expected(2);
    app->add_option("--py", o.py, "Pitman-Yor prior on gamma: theta");
    app->add_option("--ig", o.ig, "Inverse-Gaussian prior on gamma: beta");
    app->add_option("--mcmc-iters", o.mcmc_iters, "Posterior draws or MCMC iterations")->capture_default_str();
    app->add_option("--burn-in", o.burn_in, "MCMC burn-in")->capture_default_str();
    app->add_option("--replicates", o.replicates, "Monte Carlo replicates")->capture_default_str();
    app->add_flag("--strict", o.strict, "Exit with code 4 when convergence diagnostics fail");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian nonparametric biodiversity inference"};
    app.require_subcommand(1);
    Options o;
    auto* fit = app.add_subcommand("fit", "Point estimates and posterior draws of the diversity");
    auto* validate = app.add_subcommand("validate", "Rarefaction, frequency-count and rank-abundance checks");
    auto* richness = app.add_subcommand("richness", "Posterior of the total number of taxa");
    auto* extrapolate = app.add_subcommand("extrapolate", "Expected accumulation curve beyond the sample");
    auto* taxonomic = app.add_subcommand("taxonomic", "Branch diversities for nested taxonomic data");
    auto* simulate = app.add_subcommand("simulate", "Simulate abundances or nested taxonomies from the urn");
    for (auto* s : {fit, validate, richness, extrapolate, taxonomic, simulate}) add_common(s, o);
    validate->add_option("--points", o.points, "Rarefaction grid size")->capture_default_str();
    validate->add_option("--r-max", o.r_max, "Largest frequency class")->capture_default_str();
    richness->add_option("--n-hat", o.n_hat, "Estimated population size");
    richness->add_option("--n-spread", o.n_spread, "Uniform prior on N spans N_hat (1 -/+ spread)")->capture_default_str();
    extrapolate->add_option("--m", o.m, "Additional sample size");
    simulate->add_option("--n", o.n, "Sample size");
    simulate->add_option("--level", o.levels, "Nested level FAMILY:KIND:VALUES, repeat per level");
    taxonomic->add_option("--level-family", o.level_family, "Family per level (dp or ap)")->delimiter(',');
    taxonomic->add_option("--level-rho", o.level_rho, "Coarsening per level")->delimiter(',');
    for (auto* s : {fit, validate, richness, extrapolate, taxonomic, simulate}) {
        s->get_option("--sg")->excludes(s->get_option("--gamma-prior"));
        s->get_option("--py")->excludes(s->get_option("--ig"));
    }

    try {
        app.parse(argc, argv);
        if (*fit) return cmd_fit(o);
        if (*validate) return cmd_validate(o);
        if (*richness) return cmd_richness(o);
        if (*extrapolate) return cmd_extrapolate(o);
        if (*taxonomic) return cmd_taxonomic(o);
        return cmd_simulate(o);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return parse_failure;
    } catch (const biodiv::parse_error& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return parse_failure;
    } catch (const no_finite_solution& e) {
        std::cerr << "no finite solution: " << e.what() << '\n';
        return domain_failure;
    } catch (const biodiv::domain_error& e) {
        std::cerr << "domain error: " << e.what() << '\n';
        return domain_failure;
    } catch (const convergence_error& e) {
        std::cerr << "convergence failure: " << e.what() << '\n';
        return convergence_failure;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return internal_failure;
    }
}
