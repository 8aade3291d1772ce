#include "odmix/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iostream>
#include <limits>
#include <mutex>
#include <numbers>
#include <thread>

#include <Eigen/Eigenvalues>
#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/normal.hpp>

#include "odmix/errors.hpp"

namespace odmix {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::mutex progress_mutex;

}  // namespace

void ChainConfig::validate() const {
    if (n_chains < 1) throw ValidationError("n_chains must be at least 1");
    if (iterations < 1 || burn_in < 0 || burn_in >= iterations) {
        throw ValidationError("chain settings need 0 <= burn_in < iterations");
    }
    if (thin < 1) throw ValidationError("thin must be at least 1");
    if (kept_per_chain() < 1) throw ValidationError("no draws survive burn-in and thinning");
    if (!seeds.empty()) {
        if (seeds.size() != static_cast<std::size_t>(n_chains)) {
            throw ValidationError("need one seed per chain");
        }
        auto sorted = seeds;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
            throw ValidationError("chain seeds must be distinct");
        }
    }
    if (start_quantiles.size() != static_cast<std::size_t>(n_chains)) {
        throw ValidationError("need one start quantile per chain (" + std::to_string(n_chains) + ")");
    }
    for (double q : start_quantiles) {
        if (!(q > 0.0 && q < 1.0)) throw ValidationError("start quantiles must lie in (0, 1)");
    }
}

std::uint64_t ChainConfig::seed_of(int chain) const {
    if (!seeds.empty()) return seeds.at(static_cast<std::size_t>(chain));
    return derive_seed(master_seed, static_cast<std::uint64_t>(chain));
}

int ChainSet::dimension() const {
    for (const auto& c : chains) {
        if (!c.draws.empty()) return static_cast<int>(c.draws.front().beta.size()) + 1;
    }
    return 0;
}

std::size_t ChainSet::pooled_size() const {
    std::size_t n = 0;
    for (const auto& c : chains) n += c.draws.size();
    return n;
}

std::vector<ParamPoint> ChainSet::pooled() const {
    std::vector<ParamPoint> out;
    out.reserve(pooled_size());
    for (const auto& c : chains) out.insert(out.end(), c.draws.begin(), c.draws.end());
    return out;
}

Eigen::MatrixXd ChainSet::coordinates(std::size_t chain) const {
    const auto& draws = chains.at(chain).draws;
    const int d = dimension();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(draws.size()), d);
    for (std::size_t t = 0; t < draws.size(); ++t) {
        const auto r = static_cast<Eigen::Index>(t);
        m.row(r).head(d - 1) = draws[t].beta.transpose();
        m(r, d - 1) = draws[t].dispersion;
    }
    return m;
}

double gamma_log_density(double x, double shape, double rate) {
    if (!(x > 0.0)) return -kInf;
    return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

IndependenceProposal::IndependenceProposal(ProposalSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    const auto k = spec_.beta_mean.size();
    if (k > 0) {
        Eigen::LLT<Eigen::MatrixXd> llt(spec_.beta_cov);
        chol_ = llt.matrixL();
        log_norm_ = -0.5 * static_cast<double>(k) * std::log(2.0 * std::numbers::pi) -
                    chol_.diagonal().array().log().sum();
    }
}

double IndependenceProposal::log_density(const ParamPoint& point) const {
    double lp = gamma_log_density(point.dispersion, spec_.dispersion.shape, spec_.dispersion.rate);
    if (spec_.beta_mean.size() > 0) {
        const Eigen::VectorXd z =
            chol_.triangularView<Eigen::Lower>().solve(point.beta - spec_.beta_mean);
        lp += log_norm_ - 0.5 * z.squaredNorm();
    }
    return lp;
}

ParamPoint IndependenceProposal::draw(Rng& rng) const {
    ParamPoint p;
    const auto k = spec_.beta_mean.size();
    Eigen::VectorXd z(k);
    for (Eigen::Index j = 0; j < k; ++j) z[j] = standard_normal(rng);
    p.beta = spec_.beta_mean + chol_ * z;
    p.dispersion = gamma_draw(spec_.dispersion.shape, spec_.dispersion.rate, rng);
    return p;
}

ParamPoint IndependenceProposal::at_quantile(double q) const {
    const boost::math::normal_distribution<double> normal;
    const double zq = boost::math::quantile(normal, q);
    ParamPoint p;
    p.beta = spec_.beta_mean + zq * spec_.beta_cov.diagonal().cwiseSqrt();
    const boost::math::gamma_distribution<double> g(spec_.dispersion.shape, 1.0 / spec_.dispersion.rate);
    p.dispersion = boost::math::quantile(g, q);
    return p;
}

namespace {

double safe_target(const LogTarget& target, const ParamPoint& p, bool& invalid) {
    invalid = false;
    try {
        const double v = target(p);
        if (std::isnan(v)) {
            invalid = true;
            return -kInf;
        }
        return v;
    } catch (const NumericalError&) {
    } catch (const DomainError&) {
    }
    invalid = true;
    return -kInf;
}

Chain run_chain(const LogTarget& target, const IndependenceProposal& proposal, const ChainConfig& config,
                int index) {
    Rng rng(config.seed_of(index));
    ParamPoint current = proposal.at_quantile(config.start_quantiles[static_cast<std::size_t>(index)]);
    bool invalid = false;
    double log_pi = safe_target(target, current, invalid);
    if (invalid || !std::isfinite(log_pi)) {
        throw ValidationError("target is not finite at the starting point of chain " + std::to_string(index) +
                              "; check the proposal calibration");
    }
    double log_q = proposal.log_density(current);

    Chain chain;
    chain.draws.reserve(static_cast<std::size_t>(config.kept_per_chain()));
    chain.iterations.reserve(static_cast<std::size_t>(config.kept_per_chain()));
    const int report_every = std::max(1, config.iterations / 10);

    for (int t = 1; t <= config.iterations; ++t) {
        ParamPoint cand = proposal.draw(rng);
        const double log_q_cand = proposal.log_density(cand);
        const double log_pi_cand = safe_target(target, cand, invalid);
        const double log_u = std::log(uniform_open(rng));
        if (invalid) {
            ++chain.invalid_proposals;
        } else {
            // Independence kernel: [pi(c) q(x)] / [pi(x) q(c)], formed in log space.
            const double log_r = (log_pi_cand - log_pi) + (log_q - log_q_cand);
            if (log_r >= 0.0 || log_u < log_r) {
                current = std::move(cand);
                log_pi = log_pi_cand;
                log_q = log_q_cand;
                ++chain.accepted;
            }
        }
        if (t > config.burn_in && (t - config.burn_in) % config.thin == 0) {
            chain.draws.push_back(current);
            chain.iterations.push_back(t);
        }
        if (config.progress && t % report_every == 0) {
            std::lock_guard lock(progress_mutex);
            std::cerr << "chain " << index << ": " << (100 * t / config.iterations) << "% (" << t << "/"
                      << config.iterations << ")\n";
        }
    }
    chain.acceptance_rate = static_cast<double>(chain.accepted) / config.iterations;
    if (chain.accepted == 0) {
        throw ConvergenceError("chain " + std::to_string(index) +
                               " accepted no proposals; recalibrate the proposal (refit ML or widen it)");
    }
    return chain;
}

}  // namespace

ChainSet mh_run(const LogTarget& target, const ProposalSpec& spec, const ChainConfig& config) {
    config.validate();
    const IndependenceProposal proposal(spec);
    ChainSet out;
    out.config = config;
    out.chains.resize(static_cast<std::size_t>(config.n_chains));

    int threads = config.threads > 0 ? config.threads
                                     : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    threads = std::min(threads, config.n_chains);

    std::vector<std::exception_ptr> errors(out.chains.size());
    auto work = [&](int first) {
        for (int c = first; c < config.n_chains; c += threads) {
            try {
                out.chains[static_cast<std::size_t>(c)] = run_chain(target, proposal, config, c);
            } catch (...) {
                errors[static_cast<std::size_t>(c)] = std::current_exception();
            }
        }
    };
    if (threads <= 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < threads; ++w) pool.emplace_back(work, w);
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

LogTarget posterior_target(const Posterior& post) {
    return [&post](const ParamPoint& p) { return post.log_posterior(p); };
}

double PsrfReport::max_univariate() const {
    double m = 0.0;
    for (double r : univariate) m = std::max(m, r);
    return m;
}

PsrfReport psrf(const ChainSet& chains) {
    std::vector<Eigen::MatrixXd> mats;
    for (std::size_t c = 0; c < chains.chains.size(); ++c) mats.push_back(chains.coordinates(c));
    return psrf(mats);
}

PsrfReport psrf(const std::vector<Eigen::MatrixXd>& chains) {
    if (chains.size() < 2) throw ValidationError("PSRF needs at least two chains");
    const Eigen::Index len = chains.front().rows();
    const Eigen::Index dim = chains.front().cols();
    if (len < 2) throw ValidationError("PSRF needs chains of length at least 2");
    for (const auto& c : chains) {
        if (c.rows() != len || c.cols() != dim) throw ValidationError("PSRF needs chains of equal shape");
    }
    const double L = static_cast<double>(len);
    const double m = static_cast<double>(chains.size());

    Eigen::MatrixXd means(static_cast<Eigen::Index>(chains.size()), dim);
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(dim, dim);
    for (std::size_t c = 0; c < chains.size(); ++c) {
        const Eigen::RowVectorXd mu = chains[c].colwise().mean();
        means.row(static_cast<Eigen::Index>(c)) = mu;
        const Eigen::MatrixXd centred = chains[c].rowwise() - mu;
        W += centred.transpose() * centred / (L - 1.0);
    }
    W /= m;
    const Eigen::RowVectorXd grand = means.colwise().mean();
    const Eigen::MatrixXd dm = means.rowwise() - grand;
    const Eigen::MatrixXd B_over_L = dm.transpose() * dm / (m - 1.0);  // B / L

    PsrfReport report;
    if (len < 10) report.warnings.push_back("chains shorter than 10 draws");
    bool degenerate = false;
    for (Eigen::Index j = 0; j < dim; ++j) {
        const double w = W(j, j);
        if (!(w > 0.0)) {
            report.univariate.push_back(kInf);
            report.warnings.push_back("coordinate " + std::to_string(j) + " has zero within-chain variance");
            degenerate = true;
            continue;
        }
        const double v = (L - 1.0) / L * w + B_over_L(j, j);
        report.univariate.push_back(std::sqrt(v / w));
    }
    if (degenerate) {
        report.multivariate = kInf;
    } else {
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(B_over_L, W);
        if (ges.info() != Eigen::Success) {
            report.multivariate = kInf;
            report.warnings.push_back("within-chain covariance is singular");
        } else {
            const double lambda = ges.eigenvalues().maxCoeff();
            report.multivariate = (L - 1.0) / L + (m + 1.0) / m * lambda;
        }
    }
    for (const auto& w : report.warnings) std::cerr << "warning: PSRF " << w << "\n";
    return report;
}

double empirical_quantile(std::vector<double> values, double prob) {
    if (values.empty()) throw ValidationError("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<CoordinateSummary> summarize(const ChainSet& chains, double prob, const std::vector<std::string>& names) {
    if (!(prob > 0.0 && prob < 1.0)) throw ValidationError("interval probability must lie in (0, 1)");
    const auto pooled = chains.pooled();
    if (pooled.size() < 100) throw ValidationError("summaries need at least 100 pooled draws");
    const int dim = chains.dimension();
    std::vector<CoordinateSummary> out;
    std::vector<double> xs(pooled.size());
    for (int j = 0; j < dim; ++j) {
        for (std::size_t t = 0; t < pooled.size(); ++t) {
            xs[t] = j < dim - 1 ? pooled[t].beta[j] : pooled[t].dispersion;
        }
        CoordinateSummary s;
        if (static_cast<std::size_t>(j) < names.size()) {
            s.name = names[static_cast<std::size_t>(j)];
        } else {
            s.name = j < dim - 1 ? "beta" + std::to_string(j) : "dispersion";
        }
        const double n = static_cast<double>(xs.size());
        double mean = 0.0;
        for (double x : xs) mean += x;
        mean /= n;
        double ss = 0.0;
        for (double x : xs) ss += (x - mean) * (x - mean);
        s.mean = mean;
        s.sd = std::sqrt(ss / (n - 1.0));
        s.lower = empirical_quantile(xs, 0.5 * (1.0 - prob));
        s.upper = empirical_quantile(xs, 0.5 * (1.0 + prob));
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace odmix
