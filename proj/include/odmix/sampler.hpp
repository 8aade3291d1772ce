#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "odmix/calibrate.hpp"
#include "odmix/model.hpp"
#include "odmix/random.hpp"

namespace odmix {

struct ChainConfig {
    int n_chains = 5;
    int iterations = 4200;
    int burn_in = 200;
    int thin = 5;
    std::uint64_t master_seed = 0;
    /// Explicit per-chain seeds; when empty, chain c uses derive_seed(master_seed, c).
    std::vector<std::uint64_t> seeds;
    /// One proposal quantile level per chain for the starting point.
    std::vector<double> start_quantiles{0.10, 0.30, 0.50, 0.70, 0.90};
    bool progress = false;
    /// 0 picks min(n_chains, hardware threads).
    int threads = 0;

    void validate() const;
    std::uint64_t seed_of(int chain) const;
    /// Retained draws per chain: iterations t in (burn_in, iterations] with
    /// (t - burn_in) divisible by thin.
    int kept_per_chain() const { return (iterations - burn_in) / thin; }
};

struct Chain {
    std::vector<ParamPoint> draws;
    std::vector<int> iterations;  ///< iteration index of each retained draw
    double acceptance_rate = 0.0;
    long accepted = 0;
    /// Proposals whose target evaluation failed (overflowing predictor); rejected.
    long invalid_proposals = 0;
};

struct ChainSet {
    std::vector<Chain> chains;
    ChainConfig config;

    int dimension() const;
    std::size_t pooled_size() const;
    std::vector<ParamPoint> pooled() const;
    /// Row t, column j: coordinate j (beta..., dispersion) of draw t of chain c.
    Eigen::MatrixXd coordinates(std::size_t chain) const;
};

double gamma_log_density(double x, double shape, double rate);

/// Fixed independence kernel: N(beta_mean, beta_cov) x Gamma(shape, rate).
class IndependenceProposal {
public:
    explicit IndependenceProposal(ProposalSpec spec);

    const ProposalSpec& spec() const { return spec_; }
    double log_density(const ParamPoint& point) const;
    ParamPoint draw(Rng& rng) const;
    /// Every coordinate at the same marginal quantile level q.
    ParamPoint at_quantile(double q) const;

private:
    ProposalSpec spec_;
    Eigen::MatrixXd chol_;
    double log_norm_ = 0.0;
};

using LogTarget = std::function<double(const ParamPoint&)>;

/// Independence-chain Metropolis-Hastings with beta and the dispersion
/// proposed jointly. The target must be safe to call from several threads.
ChainSet mh_run(const LogTarget& target, const ProposalSpec& proposal, const ChainConfig& config);

/// Posterior target wrapper: the log posterior of `post`.
LogTarget posterior_target(const Posterior& post);

struct PsrfReport {
    std::vector<double> univariate;  ///< per coordinate; +inf when degenerate
    double multivariate = 1.0;
    std::vector<std::string> warnings;

    double max_univariate() const;
};

/// Gelman-Rubin per coordinate and the Brooks-Gelman multivariate factor.
PsrfReport psrf(const ChainSet& chains);
PsrfReport psrf(const std::vector<Eigen::MatrixXd>& chains);

struct CoordinateSummary {
    std::string name;
    double mean = 0.0;
    double sd = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

/// Mean, sd and equal-tail interval of each pooled coordinate. Names default
/// to beta0..betap and "dispersion".
std::vector<CoordinateSummary> summarize(const ChainSet& chains, double prob,
                                         const std::vector<std::string>& names = {});

/// Sample quantile with linear interpolation between order statistics.
double empirical_quantile(std::vector<double> values, double prob);

}  // namespace odmix
