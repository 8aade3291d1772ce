// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,5,9] [--expect-red 4]
//
// Criteria listed in --expect-red are known to fail; the exit status is zero
// when every criterion outside that list passes and every listed one fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <CLI11.hpp>

#include "odmix/assign.hpp"
#include "odmix/calibrate.hpp"
#include "odmix/commands.hpp"
#include "odmix/dataset_io.hpp"
#include "odmix/distmath.hpp"
#include "odmix/model.hpp"
#include "odmix/predict.hpp"
#include "odmix/random.hpp"
#include "odmix/sampler.hpp"
#include "odmix/synth.hpp"
#include "oracles.hpp"

using namespace odmix;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double x, int digits = 4) {
    std::ostringstream os;
    os.precision(digits);
    os << x;
    return os.str();
}

// ---------------------------------------------------------------- 1

Outcome pig_pmf_oracle() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    std::string where;
    for (double mu : {0.1, 1.0, 10.0, 100.0}) {
        for (double zeta : {0.1, 0.377, 1.0, 10.0}) {
            for (int y = 0; y <= 200; ++y) {
                const double lib = pig_logpmf(y, mu, zeta);
                const double ref = oracle::pig_mixture_log_pmf(y, mu, zeta);
                const double rel = std::abs(std::expm1(lib - ref));
                if (!(rel <= worst)) {
                    worst = rel;
                    where = "y=" + std::to_string(y) + " mu=" + fmt(mu) + " zeta=" + fmt(zeta);
                }
            }
        }
    }
    const double elapsed = seconds_since(t0);
    return {worst <= 1e-8 && elapsed < 60.0,
            "max relative error " + fmt(worst, 3) + " at " + where + ", " + fmt(elapsed, 3) + " s"};
}

// ---------------------------------------------------------------- 2

Outcome poisson_limit() {
    // PG and PIG approach Poisson as the dispersion grows; PLN as sigma2
    // shrinks, so its degenerate point is sigma2 = 1e-6.
    double worst = 0.0;
    std::string where;
    for (Family f : {Family::PG, Family::PLN, Family::PIG}) {
        const double d = f == Family::PLN ? 1e-6 : 1e6;
        for (double mu : {0.5, 2.0, 10.0}) {
            for (int y = 0; y <= 20; ++y) {
                const double diff = std::abs(observation_loglik(f, y, mu, d) - oracle::log_poisson(y, mu));
                if (!(diff <= worst)) {
                    worst = diff;
                    where = std::string(to_string(f)) + " y=" + std::to_string(y) + " mu=" + fmt(mu);
                }
            }
        }
    }
    // The PLN gap at small sigma2 is about sigma2 ((y - mu)^2 - y) / 2; check
    // that the library follows the exact mixture there.
    double pln_oracle = 0.0;
    for (double mu : {0.5, 2.0, 10.0}) {
        for (int y = 0; y <= 20; ++y) {
            pln_oracle = std::max(pln_oracle, std::abs(observation_loglik(Family::PLN, y, mu, 1e-6) -
                                                       oracle::pln_mixture_log_pmf(y, mu, 1e-6)));
        }
    }
    return {worst <= 1e-4, "max |log-pmf difference| " + fmt(worst, 3) + " at " + where +
                               "; PLN vs mixture quadrature at sigma2=1e-6: " + fmt(pln_oracle, 3)};
}

// ---------------------------------------------------------------- 3

Outcome conditional_draws() {
    // Conditional densities are Poisson(y; mu u) times the mixing density,
    // normalized by quadrature.
    Rng pick(20240601);
    std::uniform_int_distribution<int> ys(0, 40);
    std::uniform_real_distribution<double> log_mu(std::log(0.1), std::log(50.0)), log_d(std::log(0.1), std::log(10.0));
    double min_p = 1.0;
    std::string where;
    for (Family f : {Family::PG, Family::PIG}) {
        for (int point = 0; point < 5; ++point) {
            const int y = ys(pick);
            const double mu = std::exp(log_mu(pick)), d = std::exp(log_d(pick));
            auto unnormalized = [&](double u) {
                const double mixing =
                    f == Family::PG
                        ? d * std::log(d) - std::lgamma(d) + (d - 1.0) * std::log(u) - d * u
                        : 0.5 * (std::log(d) - std::log(2.0 * std::numbers::pi) - 3.0 * std::log(u)) -
                              d * (u - 1.0) * (u - 1.0) / (2.0 * u);
                return oracle::log_poisson(y, mu * u) + mixing;
            };
            const double log_z = std::log(oracle::integrate_density(unnormalized));
            auto log_pdf = [&](double u) { return unnormalized(u) - log_z; };
            Rng rng = make_stream(77, static_cast<std::uint64_t>(point + 10 * static_cast<int>(f)));
            std::vector<double> draws(100000);
            for (double& u : draws) u = draw_latent_u(f, y, mu, d, rng);
            const double p = oracle::ks_pvalue_against_density(draws, log_pdf);
            if (p < min_p) {
                min_p = p;
                where = std::string(to_string(f)) + " y=" + std::to_string(y) + " mu=" + fmt(mu) + " d=" + fmt(d);
            }
        }
    }
    return {min_p > 0.01, "smallest KS p " + fmt(min_p, 3) + " (" + where + "), 10 points x 1e5 draws"};
}

// ---------------------------------------------------------------- 4

// Predictive variance at mean mu: K cells whose counts sit at evenly spaced
// quantiles of the marginal pmf, each replicated M times from u | y.
double predictive_variance(Family f, double mu, double d, std::size_t M) {
    const int zones = 32;
    const int K = zones * zones;
    ODDataset data;
    data.zones = zones;
    data.covariate_names = {"intercept"};
    data.X = Eigen::MatrixXd::Ones(K, 1);
    data.y.resize(K);
    double cdf = 0.0;
    int y = 0;
    for (int k = 0; k < K; ++k) {
        const double q = (k + 0.5) / K;
        while (cdf + std::exp(observation_loglik(f, y, mu, d)) < q) cdf += std::exp(observation_loglik(f, y++, mu, d));
        data.y[k] = y;
    }
    std::vector<ParamPoint> draws(M, ParamPoint{Eigen::VectorXd::Constant(1, std::log(mu)), d});
    double s1 = 0.0, s2 = 0.0;
    for_each_predictive_row(draws, data, f, 4242, [&](std::size_t, const ParamPoint&, const Eigen::VectorXd&,
                                                      const Eigen::VectorXd& yp) {
        s1 += yp.sum();
        s2 += yp.squaredNorm();
    });
    const double n = static_cast<double>(M) * K;
    return s2 / n - (s1 / n) * (s1 / n);
}

Outcome variance_function() {
    const std::size_t M = 10000;
    const double theta = 1.0, zeta = 1.0;
    bool pass = true;
    std::ostringstream os, quad;
    for (double mu : {1.0, 5.0, 20.0}) {
        const double pg = predictive_variance(Family::PG, mu, theta, M);
        const double pg_target = mu + mu * mu / theta;
        const double pig = predictive_variance(Family::PIG, mu, zeta, M);
        const double cubic = mu + mu * mu * mu / zeta;
        const double quadratic = mu + mu * mu / zeta;
        const double e_pg = std::abs(pg / pg_target - 1.0), e_pig = std::abs(pig / cubic - 1.0);
        pass = pass && e_pg <= 0.05 && e_pig <= 0.05;
        os << " mu=" << mu << ": PG " << fmt(pg) << " vs " << fmt(pg_target) << " (" << fmt(100 * e_pg, 2)
           << "%), PIG " << fmt(pig) << " vs cubic " << fmt(cubic) << " (" << fmt(100 * e_pig, 3) << "%);";
        quad << ' ' << fmt(100 * std::abs(pig / quadratic - 1.0), 2) << '%';
    }
    os << " PIG vs mu+mu^2/zeta:" << quad.str();
    return {pass, os.str()};
}

// ---------------------------------------------------------------- 5, 6, 8

struct Replicate {
    ODDataset data;
    SynthTruth truth;
    PosteriorFit fit;
};

Eigen::VectorXd truth_beta() { return (Eigen::VectorXd(3) << 0.2, 0.5, -0.4).finished(); }

double truth_dispersion(Family f) {
    switch (f) {
        case Family::PG: return 0.965;
        case Family::PLN: return 1.065;
        case Family::PIG: return 0.377;
    }
    return 1.0;
}

ODDataset simulate(Family f, const Eigen::VectorXd& beta, double d, bool distance, std::uint64_t seed,
                   SynthTruth* truth = nullptr) {
    SynthSpec spec;
    spec.zones = 45;
    spec.family = f;
    spec.beta = beta;
    spec.dispersion = d;
    spec.distance = distance;
    Rng rng = make_stream(seed, kSynthStream);
    SynthResult r = synth_generate(spec, rng);
    if (truth) *truth = r.truth;
    return r.table.data;
}

PosteriorFit fit(const ODDataset& data, Family f, std::uint64_t seed, double a = 1e-3) {
    ChainConfig c;
    c.master_seed = derive_seed(seed, kChainStream);
    ModelSpec spec = make_spec(f, data, a);
    spec.pln.seed = derive_seed(seed, kPlnStream);
    return fit_posterior(data, spec, c);
}

std::vector<Replicate> recovery_replicates(Family f, Outcome& outcome) {
    const auto t0 = Clock::now();
    std::vector<Replicate> reps;
    int covered = 0;
    double worst_psrf = 0.0, worst_z = 0.0;
    for (int r = 0; r < 20; ++r) {
        const std::uint64_t seed = 1000 * (static_cast<std::uint64_t>(f) + 1) + static_cast<std::uint64_t>(r);
        Replicate rep;
        rep.data = simulate(f, truth_beta(), truth_dispersion(f), false, seed, &rep.truth);
        rep.fit = fit(rep.data, f, seed);
        const auto s = summarize(rep.fit.chains, 0.95);
        double z = 0.0;
        for (std::size_t j = 0; j < s.size(); ++j) {
            const double truth = j < 3 ? rep.truth.beta[static_cast<Eigen::Index>(j)] : rep.truth.dispersion;
            z = std::max(z, std::abs(s[j].mean - truth) / s[j].sd);
        }
        worst_z = std::max(worst_z, z);
        if (z <= 3.0) ++covered;
        worst_psrf = std::max(worst_psrf, rep.fit.psrf.max_univariate());
        reps.push_back(std::move(rep));
    }
    const double elapsed = seconds_since(t0);
    const double limit = f == Family::PLN ? 1800.0 : 600.0;
    const bool pass = covered >= 19 && worst_psrf < 1.1 && elapsed < limit;
    std::ostringstream os;
    os << to_string(f) << ": " << covered << "/20 within 3 SD (worst " << fmt(worst_z, 3) << " SD), max PSRF "
       << fmt(worst_psrf, 5) << ", " << fmt(elapsed, 4) << " s (limit " << limit << ")";
    outcome.pass = outcome.pass && pass;
    outcome.detail += (outcome.detail.empty() ? "" : "; ") + os.str();
    return reps;
}

Outcome dic_ordering(const std::vector<Replicate>& pig) {
    int wins = 0;
    std::ostringstream os;
    for (std::size_t r = 0; r < pig.size(); ++r) {
        const auto& rep = pig[r];
        const PosteriorFit pg = fit(rep.data, Family::PG, 5000 + r);
        const double d_pg = criteria(pg.chains, rep.data, pg.spec).dic_marginal;
        const double d_pig = criteria(rep.fit.chains, rep.data, rep.fit.spec).dic_marginal;
        if (d_pig < d_pg) ++wins;
        if (r < 3) os << " " << fmt(d_pig, 6) << " vs " << fmt(d_pg, 6) << ";";
    }
    return {wins >= 18, "PIG marginal DIC lower in " + std::to_string(wins) + "/20 (zeta 0.377); first:" + os.str()};
}

Outcome ppc_calibration(const std::vector<Replicate>& reps) {
    int inside = 0;
    for (std::size_t r = 0; r < reps.size(); ++r) {
        const auto& rep = reps[r];
        const PredictiveEnsemble e = predictive_draws(rep.fit.chains, rep.data, rep.fit.spec.family,
                                                      {.draws = 500, .seed = derive_seed(9000 + r, kPredictStream)});
        const auto p = ppc_pvalues(e, rep.data).p_values;
        if (std::all_of(p.begin(), p.end(), [](double v) { return v > 0.05 && v < 0.95; })) ++inside;
    }

    // PG data fitted without its intercept. With u drawn given y, the summed
    // residual mirrors the NB intercept score, so an omitted slope alone is
    // absorbed; an omitted intercept is not.
    const Eigen::VectorXd beta = (Eigen::VectorXd(3) << 1.5, 0.5, -0.4).finished();
    const ODDataset full = simulate(Family::PG, beta, 5.0, false, 31337);
    const ODDataset reduced = full.with_columns({1, 2});
    const PosteriorFit mis = fit(reduced, Family::PG, 31337);
    const PredictiveEnsemble e = predictive_draws(mis.chains, reduced, Family::PG, {.draws = 500, .seed = 7});
    const auto p = ppc_pvalues(e, reduced).p_values;
    const bool flagged = std::any_of(p.begin(), p.end(), [](double v) { return v <= 0.01 || v >= 0.99; });
    std::ostringstream os;
    os << "well specified (PIG): " << inside << "/20 with all p in (0.05, 0.95); PG without intercept p = " << fmt(p[0], 3)
       << ", " << fmt(p[1], 3) << ", " << fmt(p[2], 3);
    return {inside >= 18 && flagged, os.str()};
}

// ---------------------------------------------------------------- 7

Outcome hyperprior_insensitivity() {
    bool pass = true;
    std::ostringstream os;
    for (Family f : {Family::PG, Family::PIG}) {
        const ODDataset data = simulate(f, truth_beta(), truth_dispersion(f), false, 777 + static_cast<int>(f));
        std::vector<double> means, vars;
        for (double a : {0.001, 0.1, 1.0}) {
            const auto s = summarize(fit(data, f, 777, a).chains, 0.95).back();
            means.push_back(s.mean);
            vars.push_back(s.sd * s.sd);
        }
        const double pooled = std::sqrt((vars[0] + vars[1] + vars[2]) / 3.0);
        const double spread = *std::max_element(means.begin(), means.end()) - *std::min_element(means.begin(), means.end());
        pass = pass && spread < 3.0 * pooled;
        os << to_string(f) << " means " << fmt(means[0]) << ", " << fmt(means[1]) << ", " << fmt(means[2]) << " differ by "
           << fmt(spread / pooled, 3) << " pooled SD; ";
    }
    return {pass, os.str()};
}

// ---------------------------------------------------------------- 9

Link make_link(const std::string& id, int from, int to, double tf, double cap, double alpha = 0.15, double beta = 4.0) {
    Link l;
    l.id = id;
    l.from = from;
    l.to = to;
    l.free_flow_time = tf;
    l.capacity = cap;
    l.alpha = alpha;
    l.beta = beta;
    return l;
}

double braess_error() {
    Network net;
    for (const char* name : {"s", "a", "b", "t"}) net.add_node(name);
    net.add_link(make_link("sa", 0, 1, 10.0, 4.0));
    net.add_link(make_link("at", 1, 3, 25.0, 8.0));
    net.add_link(make_link("sb", 0, 2, 25.0, 8.0));
    net.add_link(make_link("bt", 2, 3, 10.0, 4.0));
    net.add_link(make_link("ab", 1, 2, 2.0, 10.0));
    ODDemand d;
    d.zone_nodes = {0, 3};
    d.trips = {{0, 1, 6.0}};
    const auto r = due_assign(net, d, {.tol = 1e-8, .max_iter = 20000});

    // Paths s-a-t, s-b-t, s-a-b-t as link lists; grid over their flows.
    const std::vector<std::vector<int>> paths{{0, 1}, {2, 3}, {0, 4, 3}};
    const int steps = 6000;
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_v, v(5);
    for (int i = 0; i <= steps; ++i) {
        for (int j = 0; i + j <= steps; ++j) {
            const double f[3] = {i * 1e-3, j * 1e-3, (steps - i - j) * 1e-3};
            v.setZero();
            for (int p = 0; p < 3; ++p) {
                for (int l : paths[static_cast<std::size_t>(p)]) v[l] += f[p];
            }
            const double z = beckmann_objective(net, v);
            if (z < best) {
                best = z;
                best_v = v;
            }
        }
    }
    return (r.volumes - best_v).cwiseAbs().maxCoeff();
}

// Worst ratio of used-route cost spread to (relative gap x cheapest cost)
// over random networks of link-disjoint routes.
double wardrop_ratio() {
    std::mt19937_64 rng(4711);
    std::uniform_real_distribution<double> tf(5.0, 30.0), cap(3.0, 15.0), alpha(0.05, 1.0), beta(1.0, 5.0);
    std::uniform_int_distribution<int> routes_n(3, 6), hops(1, 3);
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        Network net;
        const int s = net.add_node("s"), t = net.add_node("t");
        std::vector<std::vector<int>> routes(static_cast<std::size_t>(routes_n(rng)));
        int id = 0;
        for (auto& route : routes) {
            int prev = s;
            const int k = hops(rng);
            for (int h = 0; h < k; ++h) {
                const int next = h + 1 == k ? t : net.add_node("r" + std::to_string(id) + "_" + std::to_string(h));
                route.push_back(static_cast<int>(net.link_count()));
                net.add_link(make_link("l" + std::to_string(id++), prev, next, tf(rng), cap(rng), alpha(rng), beta(rng)));
                prev = next;
            }
        }
        const double demand = 10.0 * static_cast<double>(routes.size());
        ODDemand d;
        d.zone_nodes = {s, t};
        d.trips = {{0, 1, demand}};
        const auto r = due_assign(net, d, {.tol = 1e-4, .max_iter = 5000});
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (const auto& route : routes) {
            double c = 0.0;
            for (int l : route) c += link_time(net.links()[static_cast<std::size_t>(l)], r.volumes[l]);
            if (r.volumes[route.front()] > 0.1 * demand) {
                lo = std::min(lo, c);
                hi = std::max(hi, c);
            }
        }
        worst = std::max(worst, (hi - lo) / (r.relative_gap * lo));
    }
    return worst;
}

Outcome equilibrium() {
    const double braess = braess_error();
    const double wardrop = wardrop_ratio();
    double bpr = 0.0;
    for (double tf : {1.0, 12.0, 37.5, 600.0}) {
        for (double c : {1.0, 100.0, 1800.0}) {
            bpr = std::max(bpr, std::abs(bpr_time(tf, c, c, 0.15, 4.0) / (1.15 * tf) - 1.0));
        }
    }
    std::ostringstream os;
    os << "Braess max link error " << fmt(braess, 3) << "; Wardrop spread / (gap x cost) at most " << fmt(wardrop, 3)
       << "; BPR at v=c off by " << fmt(bpr, 3) << " relative";
    return {braess <= 1e-2 && wardrop <= 10.0 && bpr <= 4 * std::numeric_limits<double>::epsilon(), os.str()};
}

// ---------------------------------------------------------------- 10

int cli(const std::string& args) {
    const std::string cmd = std::string(ODMIX_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::pair<std::string, std::string>> run_pipeline(const fs::path& dir) {
    fs::remove_all(dir);
    const std::string common = " --seed 2026 --out " + dir.string();
    const std::vector<std::string> steps{
        "synth" + common + " --synth-zones 12 --synth-distance true --synth-beta 1.5,0.5,0.4,-0.5",
        "fit" + common + " --family PIG --data " + (dir / "od.csv").string(),
        "predict" + common,
        "assign" + common + " --network " + (dir / "network.csv").string(),
    };
    for (const auto& s : steps) {
        if (cli(s) != 0) throw std::runtime_error("pipeline step failed: " + s);
    }
    std::vector<std::pair<std::string, std::string>> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file()) files.emplace_back(fs::relative(entry.path(), dir).string(), read_file(entry.path().string()));
    }
    std::sort(files.begin(), files.end());
    return files;
}

Outcome determinism() {
    const fs::path dir = fs::temp_directory_path() / ("odmix_acceptance_" + std::to_string(::getpid()));
    const auto first = run_pipeline(dir);
    const auto second = run_pipeline(dir);
    fs::remove_all(dir);
    std::size_t bytes = 0;
    for (const auto& [name, body] : first) bytes += body.size();
    const bool same = first == second && !first.empty();
    return {same, std::to_string(first.size()) + " artifacts (" + std::to_string(bytes) + " bytes) " +
                      (same ? "identical" : "differ") + " across two runs"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"odmix acceptance suite"};
    std::vector<int> only, expect_red;
    app.add_option("--only", only, "run only these criteria")->delimiter(',');
    app.add_option("--expect-red", expect_red, "criteria known to fail")->delimiter(',');
    CLI11_PARSE(app, argc, argv);
    const std::set<int> selected(only.begin(), only.end()), red(expect_red.begin(), expect_red.end());
    auto wanted = [&](int k) { return selected.empty() || selected.count(k) > 0; };

    int unexpected = 0;
    auto report = [&](int k, const std::string& name, const std::function<Outcome()>& run) {
        if (!wanted(k)) return;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const bool known = red.count(k) > 0;
        if (o.pass == known) ++unexpected;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << k << " (" << name << "): " << o.detail << " ["
                  << fmt(seconds_since(t0), 4) << " s]" << (known ? (o.pass ? " [expected red, now passing]" : " [expected red]") : "")
                  << std::endl;
    };

    report(1, "PIG pmf vs quadrature", pig_pmf_oracle);
    report(2, "Poisson limit", poisson_limit);
    report(3, "latent conditional draws", conditional_draws);
    report(4, "variance function", variance_function);

    std::vector<Replicate> pig_reps;
    report(5, "synthetic recovery", [&] {
        Outcome o{true, ""};
        for (Family f : {Family::PG, Family::PLN, Family::PIG}) {
            auto reps = recovery_replicates(f, o);
            if (f == Family::PIG) pig_reps = std::move(reps);
        }
        return o;
    });
    auto pig_fits = [&]() -> const std::vector<Replicate>& {
        if (pig_reps.empty()) {
            Outcome ignored{true, ""};
            pig_reps = recovery_replicates(Family::PIG, ignored);
        }
        return pig_reps;
    };
    report(6, "DIC ordering", [&] { return dic_ordering(pig_fits()); });
    report(7, "hyperprior insensitivity", hyperprior_insensitivity);
    report(8, "PPC calibration", [&] { return ppc_calibration(pig_fits()); });
    report(9, "equilibrium", equilibrium);
    report(10, "end-to-end determinism", determinism);

    if (unexpected) std::cout << unexpected << " criterion outcome(s) differ from expectation\n";
    return unexpected ? 1 : 0;
}
