#include "odmix/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "odmix/artifacts.hpp"
#include "odmix/assign.hpp"
#include "odmix/dataset_io.hpp"
#include "odmix/predict.hpp"
#include "odmix/synth.hpp"

namespace odmix {

namespace fs = std::filesystem;

namespace {

std::string path_in(const RunConfig& c, const std::string& name) { return (fs::path(c.out) / name).string(); }

std::uint64_t require_seed(const RunConfig& c, const std::string& verb) {
    if (!c.seed) throw ValidationError(verb + " needs a master seed (--seed)");
    return *c.seed;
}

std::string require_artifact(const RunConfig& c, const std::string& name, const std::string& producer) {
    const std::string p = path_in(c, name);
    if (!fs::exists(p)) throw DependencyError("missing " + p + "; run '" + producer + "' first");
    return p;
}

std::vector<double> parse_list(const std::string& text, const std::string& key) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        RunConfig scratch;
        scratch.set("a", item);  // reuse the strict number parser
        out.push_back(scratch.a);
    }
    if (out.empty()) throw ValidationError("config '" + key + "' is empty");
    return out;
}

std::vector<std::string> coefficient_names(const ODDataset& data) {
    if (data.covariate_names.size() == static_cast<std::size_t>(data.coefficients())) return data.covariate_names;
    std::vector<std::string> names;
    for (int j = 0; j < data.coefficients(); ++j) names.push_back("beta" + std::to_string(j));
    return names;
}

std::string summary_csv(const std::vector<CoordinateSummary>& s, const PsrfReport& r, const RunConfig& config) {
    std::ostringstream os;
    os << format_preamble("summary", config);
    os << "parameter,mean,sd,q025,q975,psrf\n";
    for (std::size_t j = 0; j < s.size(); ++j) {
        os << s[j].name << ',' << format_double(s[j].mean) << ',' << format_double(s[j].sd) << ','
           << format_double(s[j].lower) << ',' << format_double(s[j].upper) << ','
           << format_double(j < r.univariate.size() ? r.univariate[j] : 1.0) << '\n';
    }
    return os.str();
}

std::string psrf_text(const PsrfReport& r, const std::vector<std::string>& names, double threshold,
                      const RunConfig& config) {
    std::ostringstream os;
    os << format_preamble("psrf", config);
    for (std::size_t j = 0; j < r.univariate.size(); ++j) {
        os << "psrf." << (j < names.size() ? names[j] : std::to_string(j)) << '=' << format_double(r.univariate[j]) << '\n';
    }
    os << "psrf.multivariate=" << format_double(r.multivariate) << '\n';
    os << "status=" << (r.max_univariate() < threshold ? "ok" : "warning") << '\n';
    for (const auto& w : r.warnings) os << "warning=" << w << '\n';
    return os.str();
}

std::string ml_text(const PosteriorFit& f, const std::vector<std::string>& names, const RunConfig& config) {
    std::ostringstream os;
    os << format_preamble("ml", config);
    for (std::size_t j = 0; j < names.size(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        os << "ml." << names[j] << '=' << format_double(f.ml.beta_hat[jj]) << '\n';
        os << "se." << names[j] << '=' << format_double(std::sqrt(f.ml.cov_beta(jj, jj))) << '\n';
    }
    os << "ml.dispersion=" << format_double(f.ml.dispersion_hat) << '\n';
    os << "var.dispersion=" << format_double(f.ml.var_dispersion) << '\n';
    os << "dispersion_at_bound=" << (f.ml.dispersion_at_bound ? "true" : "false") << '\n';
    os << "log_likelihood=" << format_double(f.ml.log_likelihood) << '\n';
    os << "iterations=" << f.ml.iterations << '\n';
    os << "proposal.dispersion_shape=" << format_double(f.proposal.dispersion.shape) << '\n';
    os << "proposal.dispersion_rate=" << format_double(f.proposal.dispersion.rate) << '\n';
    return os.str();
}

struct FitArtifacts {
    PosteriorFit fit;
    std::vector<std::string> names;  ///< coefficients then dispersion
};

FitArtifacts fit_and_write(const RunConfig& config, const ODDataset& data, const std::string& dir) {
    RunConfig local = config;
    local.out = dir;
    const ModelSpec spec = model_spec(local, data);
    FitArtifacts a;
    a.fit = fit_posterior(data, spec, chain_config(local), local.proposal_inflation);
    a.names = coefficient_names(data);
    const auto coef = a.names;
    a.names.emplace_back(dispersion_name(spec.family));
    const auto summary = summarize(a.fit.chains, 0.95, a.names);
    write_file(path_in(local, "chains.txt"), format_chains(a.fit.chains, spec.family, coef, local));
    write_file(path_in(local, "summary.csv"), summary_csv(summary, a.fit.psrf, local));
    write_file(path_in(local, "psrf.txt"), psrf_text(a.fit.psrf, a.names, local.psrf_threshold, local));
    write_file(path_in(local, "ml.txt"), ml_text(a.fit, coef, local));
    return a;
}

// Convergence verdict shared by fit and sweep-a.
int psrf_status(const PsrfReport& r, const RunConfig& c, const std::string& label, std::ostream& err) {
    const double worst = r.max_univariate();
    if (worst < c.psrf_threshold) return 0;
    std::ostringstream os;
    os << label << "max univariate PSRF " << format_double(worst) << " exceeds " << format_double(c.psrf_threshold);
    if (c.strict) throw ConvergenceError(os.str());
    err << "warning: " << os.str() << '\n';
    return 0;
}

OdTable load_data_for(const RunConfig& config, const ArtifactHeader* upstream) {
    std::string path = config.data;
    if (path.empty() && upstream) path = upstream->config.data;
    if (path.empty()) throw ValidationError("no OD data given (--data)");
    return load_od_csv(path);
}

int cmd_fit(const RunConfig& config, std::ostream& out, std::ostream& err) {
    require_seed(config, "fit");
    const OdTable table = load_data_for(config, nullptr);
    const FitArtifacts a = fit_and_write(config, table.data, config.out);
    out << "fit " << to_string(a.fit.spec.family) << ": " << a.fit.chains.pooled_size() << " pooled draws, max PSRF "
        << format_double(a.fit.psrf.max_univariate()) << '\n';
    return psrf_status(a.fit.psrf, config, "", err);
}

void write_aggregates(const PredictiveEnsemble& e, const OdTable& table, const RunConfig& config) {
    const ODDataset& d = table.data;
    std::ostringstream agg, dens;
    agg << format_preamble("aggregate", config);
    agg << "subset,observed,predictive_mean,upper_tail,lower_tail,p_value\n";
    dens << format_preamble("density", config);
    dens << "subset,x,density\n";
    auto emit = [&](const std::string& name, const std::vector<std::size_t>& cells) {
        const AggregateCheck a = aggregate_check(e, d, cells, config.one_sided);
        double mean = 0.0;
        for (double s : a.sums) mean += s;
        mean /= static_cast<double>(a.sums.size());
        agg << name << ',' << format_double(a.observed) << ',' << format_double(mean) << ','
            << format_double(a.upper_tail) << ',' << format_double(a.lower_tail) << ',' << format_double(a.p_value) << '\n';
        for (std::size_t g = 0; g < a.density.grid.size(); ++g) {
            dens << name << ',' << format_double(a.density.grid[g]) << ',' << format_double(a.density.density[g]) << '\n';
        }
    };
    std::vector<std::size_t> all(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) all[i] = i;
    emit("total", all);
    for (int o = 0; o < d.zones; ++o) {
        std::vector<std::size_t> cells;
        for (int k = 0; k < d.zones; ++k) cells.push_back(static_cast<std::size_t>(o * d.zones + k));
        emit("origin:" + table.zones[static_cast<std::size_t>(o)], cells);
    }
    write_file(path_in(config, "aggregate.csv"), agg.str());
    write_file(path_in(config, "density.csv"), dens.str());
}

std::string criteria_text(const CriteriaReport& r, const RunConfig& config) {
    std::ostringstream os;
    os << format_preamble("criteria", config);
    os << "k=" << r.k << "\nn=" << r.n << '\n';
    os << "mean_deviance=" << format_double(r.mean_deviance) << '\n';
    os << "deviance_at_mean=" << format_double(r.deviance_at_mean) << '\n';
    os << "pd_marginal=" << format_double(r.pd_marginal) << '\n';
    os << "dic_marginal=" << format_double(r.dic_marginal) << '\n';
    os << "aic=" << format_double(r.aic) << '\n';
    os << "bic=" << format_double(r.bic) << '\n';
    if (r.dic_hierarchical) {
        os << "pd_hierarchical=" << format_double(*r.pd_hierarchical) << '\n';
        os << "dic_hierarchical=" << format_double(*r.dic_hierarchical) << '\n';
    }
    return os.str();
}

int cmd_predict(const RunConfig& given, std::ostream& out, std::ostream& /*err*/) {
    const std::uint64_t seed = require_seed(given, "predict");
    const ChainArtifact chains = parse_chains(read_file(require_artifact(given, "chains.txt", "fit")));
    RunConfig config = given;
    if (config.data.empty()) config.data = chains.header.config.data;
    const OdTable table = load_data_for(config, nullptr);
    if (table.data.coefficients() != static_cast<int>(chains.coefficient_names.size())) {
        throw ValidationError("data has " + std::to_string(table.data.coefficients()) +
                              " design columns but the chains have " + std::to_string(chains.coefficient_names.size()));
    }
    RunConfig model_cfg = config;
    model_cfg.family = std::string(to_string(chains.family));
    model_cfg.a = chains.header.config.a;
    const ModelSpec spec = model_spec(model_cfg, table.data);
    const std::uint64_t stream = derive_seed(seed, kPredictStream);

    if (chains.family == Family::PLN) {
        // No closed-form latent conditional: marginal criteria only.
        const CriteriaReport r = criteria(chains.chains, table.data, spec);
        write_file(path_in(config, "criteria.txt"), criteria_text(r, config));
        out << "predict PLN: marginal criteria only (no predictive ensemble for the lognormal family)\n";
        return 0;
    }

    const PredictiveEnsemble e = predictive_draws(
        chains.chains, table.data, chains.family, {.draws = static_cast<std::size_t>(config.draws), .seed = stream});
    const CriteriaReport r = criteria(chains.chains, table.data, spec, &e);
    const PpcResult ppc = ppc_pvalues(e, table.data);

    write_file(path_in(config, "ensemble.csv"), format_ensemble(e, table.zones, chains.coefficient_names, config));
    write_file(path_in(config, "criteria.txt"), criteria_text(r, config));
    std::ostringstream pv;
    pv << format_preamble("ppc", config);
    pv << "statistic,p_value,observed_mean,replicated_mean\n";
    for (std::size_t s = 0; s < kPpcStatisticNames.size(); ++s) {
        const auto col = static_cast<Eigen::Index>(s);
        pv << kPpcStatisticNames[s] << ',' << format_double(ppc.p_values[s]) << ','
           << format_double(ppc.observed.col(col).mean()) << ',' << format_double(ppc.replicated.col(col).mean()) << '\n';
    }
    write_file(path_in(config, "ppc.csv"), pv.str());
    write_aggregates(e, table, config);
    out << "predict " << to_string(chains.family) << ": " << e.rows() << " replicates, DIC "
        << format_double(r.dic_marginal) << '\n';
    return 0;
}

int cmd_assign(const RunConfig& config, std::ostream& out, std::ostream& /*err*/) {
    require_seed(config, "assign");
    if (config.network.empty()) throw ValidationError("assign needs a network file (--network)");
    const Network net = load_network_csv(config.network, config.bpr_alpha, config.bpr_beta);
    const AssignOptions options{.tol = config.tol, .max_iter = config.max_iter};

    LinkFlowEnsemble flows;
    if (!config.demand.empty()) {
        std::vector<std::string> zones;
        ODDemand d = load_demand_csv(config.demand, net, zones);
        for (auto& t : d.trips) t.demand *= config.peak_factor;
        const AssignmentResult r = due_assign(net, d, options);
        flows.volumes = r.volumes.transpose();
        flows.iterations = {r.iterations};
        flows.gaps = {r.relative_gap};
    } else {
        const EnsembleArtifact e = parse_ensemble(read_file(require_artifact(config, "ensemble.csv", "predict")));
        flows = ensemble_assign(net, e.ensemble, zone_nodes(net, e.zones), config.peak_factor, options, config.threads);
    }

    std::ostringstream lf;
    lf << format_preamble("link_flows", config);
    lf << "row,iterations,relative_gap";
    for (const Link& l : net.links()) lf << ',' << l.id;
    lf << '\n';
    for (Eigen::Index m = 0; m < flows.volumes.rows(); ++m) {
        lf << m << ',' << flows.iterations[static_cast<std::size_t>(m)] << ','
           << format_double(flows.gaps[static_cast<std::size_t>(m)]);
        for (Eigen::Index l = 0; l < flows.volumes.cols(); ++l) lf << ',' << format_double(flows.volumes(m, l));
        lf << '\n';
    }
    write_file(path_in(config, "link_flows.csv"), lf.str());

    const auto cong = congestion_probability(flows, net, config.vc_threshold);
    const Eigen::VectorXd mean = flows.mean();
    std::ostringstream cr;
    cr << format_preamble("congestion", config, {{"threshold", format_double(config.vc_threshold)}});
    cr << "link_id,from,to,type,capacity,mean_volume,mean_vc,p_exceed\n";
    for (std::size_t l = 0; l < net.link_count(); ++l) {
        const Link& k = net.links()[l];
        cr << k.id << ',' << net.node_name(k.from) << ',' << net.node_name(k.to) << ',' << to_string(k.type) << ','
           << format_double(k.capacity) << ',' << format_double(mean[static_cast<Eigen::Index>(l)]) << ','
           << format_double(cong[l].mean_vc) << ',' << format_double(cong[l].exceedance) << '\n';
    }
    write_file(path_in(config, "congestion.csv"), cr.str());

    std::ostringstream hist;
    hist << format_preamble("vc_histogram", config);
    hist << "link_id,lower,upper,count\n";
    for (std::size_t l = 0; l < net.link_count(); ++l) {
        const Histogram h = vc_histogram(flows, net, l, config.histogram_bins);
        for (std::size_t b = 0; b < h.counts.size(); ++b) {
            hist << net.links()[l].id << ',' << format_double(h.edges[b]) << ',' << format_double(h.edges[b + 1]) << ','
                 << h.counts[b] << '\n';
        }
    }
    write_file(path_in(config, "vc_histogram.csv"), hist.str());

    std::size_t congested = 0;
    for (const auto& c : cong) congested += c.exceedance >= 0.5 ? 1 : 0;
    int unconverged = 0;
    for (double g : flows.gaps) unconverged += g >= config.tol ? 1 : 0;
    out << "assign: " << flows.volumes.rows() << " assignments on " << net.link_count() << " links, " << congested
        << " links with P(V/C > " << format_double(config.vc_threshold) << ") >= 0.5";
    if (unconverged) out << ", " << unconverged << " rows stopped at max_iter";
    out << '\n';
    return 0;
}

// Body lines of a key=value artifact.
std::vector<std::string> body_lines(const std::string& path) {
    std::vector<std::string> lines;
    std::istringstream in(read_file(path));
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] != '#') lines.push_back(line);
    }
    return lines;
}

int cmd_report(const RunConfig& config, std::ostream& out, std::ostream& /*err*/) {
    if (!fs::exists(path_in(config, "chains.txt")) && !fs::exists(path_in(config, "sweep.csv"))) {
        throw DependencyError("nothing to report in " + config.out + "; run 'fit' first");
    }
    std::ostringstream os;
    os << "odmix report for " << config.out << "\n\n";
    auto section = [&](const std::string& title, const std::string& file) {
        const std::string p = path_in(config, file);
        if (!fs::exists(p)) return;
        os << "== " << title << " ==\n";
        for (const auto& l : body_lines(p)) os << l << '\n';
        os << '\n';
    };
    if (fs::exists(path_in(config, "chains.txt"))) {
        const ChainArtifact c = parse_chains(read_file(path_in(config, "chains.txt")));
        os << "== chains ==\nfamily=" << to_string(c.family) << "\nchains=" << c.chains.chains.size()
           << "\npooled_draws=" << c.chains.pooled_size() << '\n';
        for (std::size_t k = 0; k < c.chains.chains.size(); ++k) {
            os << "acceptance.chain" << k << '=' << format_double(c.chains.chains[k].acceptance_rate) << '\n';
        }
        os << '\n';
    }
    section("posterior summary", "summary.csv");
    section("convergence", "psrf.txt");
    section("maximum likelihood", "ml.txt");
    section("model criteria", "criteria.txt");
    section("posterior predictive p-values", "ppc.csv");
    section("hyperprior sweep", "sweep.csv");
    if (fs::exists(path_in(config, "congestion.csv"))) {
        auto rows = body_lines(path_in(config, "congestion.csv"));
        const std::string header = rows.empty() ? "" : rows.front();
        if (!rows.empty()) rows.erase(rows.begin());
        auto p_of = [](const std::string& r) { return std::stod(r.substr(r.rfind(',') + 1)); };
        std::stable_sort(rows.begin(), rows.end(), [&](const auto& x, const auto& y) { return p_of(x) > p_of(y); });
        os << "== most congested links ==\n" << header << '\n';
        for (std::size_t k = 0; k < std::min<std::size_t>(10, rows.size()); ++k) os << rows[k] << '\n';
        os << '\n';
    }
    write_file(path_in(config, "report.txt"), os.str());
    out << os.str();
    return 0;
}

int cmd_sweep(const RunConfig& config, std::ostream& out, std::ostream& err) {
    require_seed(config, "sweep-a");
    const OdTable table = load_data_for(config, nullptr);
    struct Row {
        double a, mean, sd, lower, upper;
    };
    std::vector<Row> rows;
    int status = 0;
    for (double a : {0.001, 0.1, 1.0}) {
        RunConfig c = config;
        c.a = a;
        const std::string dir = path_in(config, "a_" + format_double(a));
        const FitArtifacts f = fit_and_write(c, table.data, dir);
        const auto s = summarize(f.fit.chains, 0.95, f.names);
        rows.push_back({a, s.back().mean, s.back().sd, s.back().lower, s.back().upper});
        status = std::max(status, psrf_status(f.fit.psrf, config, "a=" + format_double(a) + ": ", err));
    }
    double pooled = 0.0;
    for (const Row& r : rows) pooled += r.sd * r.sd;
    pooled = std::sqrt(pooled / static_cast<double>(rows.size()));
    double spread = 0.0;
    for (const Row& x : rows) {
        for (const Row& y : rows) spread = std::max(spread, std::abs(x.mean - y.mean));
    }
    const std::string disp(dispersion_name(family_from_string(config.family)));
    std::ostringstream os;
    os << format_preamble("sweep", config,
                          {{"pooled_sd", format_double(pooled)},
                           {"max_mean_difference", format_double(spread)},
                           {"difference_in_pooled_sd", format_double(spread / pooled)}});
    os << "a," << disp << "_mean," << disp << "_sd," << disp << "_q025," << disp << "_q975\n";
    for (const Row& r : rows) {
        os << format_double(r.a) << ',' << format_double(r.mean) << ',' << format_double(r.sd) << ','
           << format_double(r.lower) << ',' << format_double(r.upper) << '\n';
    }
    write_file(path_in(config, "sweep.csv"), os.str());
    out << "sweep-a: dispersion means differ by " << format_double(spread / pooled) << " pooled SD\n";
    return status;
}

int cmd_synth(const RunConfig& config, std::ostream& out, std::ostream& /*err*/) {
    const std::uint64_t seed = require_seed(config, "synth");
    SynthSpec spec;
    spec.zones = config.synth_zones;
    spec.family = family_from_string(config.family);
    const auto beta = parse_list(config.synth_beta, "synth_beta");
    spec.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    spec.dispersion = config.synth_dispersion;
    spec.attribute_pairs = config.synth_pairs;
    spec.distance = config.synth_distance;
    spec.zero_fraction = config.synth_zero_fraction;
    Rng rng = make_stream(seed, kSynthStream);
    const SynthResult r = synth_generate(spec, rng);

    const std::string data_path = config.data.empty() ? path_in(config, "od.csv") : config.data;
    write_od_csv(data_path, r.table);
    write_file(path_in(config, "network.csv"),
               format_network_csv(synth_network(r.truth, r.table.zones, config.synth_capacity_scale)));
    std::ostringstream t;
    t << format_preamble("truth", config);
    t << "family=" << to_string(r.truth.family) << '\n';
    for (Eigen::Index j = 0; j < r.truth.beta.size(); ++j) {
        t << r.table.data.covariate_names[static_cast<std::size_t>(j)] << '=' << format_double(r.truth.beta[j]) << '\n';
    }
    t << dispersion_name(r.truth.family) << '=' << format_double(r.truth.dispersion) << '\n';
    const double zeros = (r.table.data.y.array() == 0.0).cast<double>().mean();
    t << "zero_fraction=" << format_double(zeros) << '\n';
    write_file(path_in(config, "truth.txt"), t.str());
    out << "synth: " << r.table.data.size() << " cells, " << format_double(100.0 * zeros) << "% zero, written to "
        << data_path << '\n';
    return 0;
}

}  // namespace

ModelSpec model_spec(const RunConfig& config, const ODDataset& data) {
    ModelSpec spec = make_spec(family_from_string(config.family), data, config.a);
    spec.pln.method = config.pln_method == "montecarlo" ? PlnIntegration::Method::montecarlo
                                                        : PlnIntegration::Method::quadrature;
    spec.pln.order = config.quadrature_order;
    spec.pln.draws = config.mc_draws;
    if (config.seed) spec.pln.seed = derive_seed(*config.seed, kPlnStream);
    return spec;
}

ChainConfig chain_config(const RunConfig& config) {
    ChainConfig c;
    c.n_chains = config.chains;
    c.iterations = config.iterations;
    c.burn_in = config.burn_in;
    c.thin = config.thin;
    c.threads = static_cast<int>(config.threads);
    if (config.seed) c.master_seed = derive_seed(*config.seed, kChainStream);
    if (c.n_chains != static_cast<int>(c.start_quantiles.size())) {
        c.start_quantiles.clear();
        for (int k = 0; k < c.n_chains; ++k) c.start_quantiles.push_back((k + 0.5) / c.n_chains);
    }
    return c;
}

PosteriorFit fit_posterior(const ODDataset& data, const ModelSpec& spec, const ChainConfig& chains,
                           double proposal_inflation) {
    if (!(proposal_inflation > 0.0)) throw ValidationError("proposal inflation must be positive");
    PosteriorFit f;
    f.spec = spec;
    f.ml = fit_ml(spec, data);
    f.proposal = build_proposals(f.ml);
    if (proposal_inflation != 1.0) {
        f.proposal.beta_cov *= proposal_inflation;
        f.proposal.dispersion = moment_matched_gamma(f.proposal.dispersion.mean(),
                                                     f.proposal.dispersion.variance() * proposal_inflation);
    }
    const Posterior post(spec, data);
    f.chains = mh_run(posterior_target(post), f.proposal, chains);
    f.psrf = psrf(f.chains);
    return f;
}

std::string category_name(ErrorCategory category) {
    switch (category) {
        case ErrorCategory::validation: return "validation";
        case ErrorCategory::dependency: return "dependency";
        case ErrorCategory::numerical: return "numerical";
        case ErrorCategory::convergence: return "convergence";
    }
    return "unknown";
}

int run_command(const std::string& verb, const RunConfig& config, std::ostream& out, std::ostream& err) {
    try {
        config.validate();
        if (verb == "fit") return cmd_fit(config, out, err);
        if (verb == "predict") return cmd_predict(config, out, err);
        if (verb == "assign") return cmd_assign(config, out, err);
        if (verb == "report") return cmd_report(config, out, err);
        if (verb == "sweep-a") return cmd_sweep(config, out, err);
        if (verb == "synth") return cmd_synth(config, out, err);
        throw ValidationError("unknown command '" + verb + "'");
    } catch (const Error& e) {
        err << "error[" << category_name(e.category()) << "]: " << e.what() << '\n';
        return static_cast<int>(e.category());
    } catch (const std::exception& e) {
        err << "error[numerical]: " << e.what() << '\n';
        return static_cast<int>(ErrorCategory::numerical);
    }
}

}  // namespace odmix
