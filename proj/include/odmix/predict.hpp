#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "odmix/model.hpp"
#include "odmix/sampler.hpp"

namespace odmix {

/// One draw of u_i given (y_i, mu_i, dispersion):
/// PG: Gamma(y + theta, mu + theta); PIG: GIG(y - 1/2, 2 mu + zeta, zeta).
/// PLN has no closed-form conditional and throws DomainError.
double draw_latent_u(Family family, Count y, double mu, double dispersion, Rng& rng);

/// Conjugate dispersion draw given latent effects:
/// PIG: zeta | u ~ Gamma(a + n/2, a + sum (u - 1)^2 / 2u);
/// PLN: sigma2 | u ~ InvGamma(a + n/2, a + sum (log u)^2 / 2).
/// PG throws DomainError.
double draw_conditional_dispersion(Family family, const Eigen::VectorXd& u, double a, Rng& rng);

/// `count` indices spread evenly over [0, total), first and last included.
std::vector<std::size_t> evenly_spaced(std::size_t total, std::size_t count);

struct PredictiveEnsemble {
    Family family = Family::PIG;
    std::vector<ParamPoint> params;        ///< posterior draw behind each row
    std::vector<std::size_t> draw_index;   ///< index of that draw in the pooled chain
    Eigen::MatrixXd u;                     ///< M x n latent effects
    Eigen::MatrixXd y_pred;                ///< M x n replicated counts

    std::size_t rows() const { return params.size(); }
};

struct PredictiveOptions {
    std::size_t draws = 500;  ///< evenly spaced pooled draws; 0 or >= pooled uses all
    std::uint64_t seed = 0;
};

using PredictiveRowFn = std::function<void(std::size_t row, const ParamPoint& params,
                                           const Eigen::VectorXd& u, const Eigen::VectorXd& y_pred)>;

/// Generates predictive rows one at a time; row m draws from derive_seed(seed, m).
void for_each_predictive_row(const std::vector<ParamPoint>& draws, const ODDataset& data, Family family,
                             std::uint64_t seed, const PredictiveRowFn& fn);

PredictiveEnsemble predictive_draws(const ChainSet& chains, const ODDataset& data, Family family,
                                    const PredictiveOptions& options);
PredictiveEnsemble predictive_draws(const std::vector<ParamPoint>& draws, const ODDataset& data,
                                    Family family, std::uint64_t seed);

inline constexpr std::array<const char*, 3> kPpcStatisticNames{"sum_residual", "sum_squared_residual",
                                                               "poisson_deviance"};

/// Discrepancies against the conditional mean mu * u: sum(y - mu u),
/// sum (y - mu u)^2 and -2 sum log Poisson(y; mu u).
std::array<double, 3> ppc_statistics(const Eigen::VectorXd& y, const Eigen::VectorXd& conditional_mean);

struct PpcResult {
    std::array<double, 3> p_values{};
    Eigen::MatrixXd observed;    ///< M x 3
    Eigen::MatrixXd replicated;  ///< M x 3
};

/// Bayesian p-values: fraction of draws with T(y_rep) >= T(y).
PpcResult ppc_pvalues(const PredictiveEnsemble& ensemble, const ODDataset& data);

struct DensityExport {
    std::vector<double> grid;
    std::vector<double> density;
    double bandwidth = 0.0;
};

/// Gaussian kernel density with Silverman's bandwidth on an evenly spaced grid.
DensityExport kernel_density(const std::vector<double>& samples, int grid_points = 512);

struct AggregateCheck {
    std::vector<double> sums;  ///< one per ensemble row
    double observed = 0.0;
    double upper_tail = 0.0;   ///< fraction of sums >= observed
    double lower_tail = 0.0;   ///< fraction of sums <= observed
    double p_value = 0.0;
    DensityExport density;
};

/// Compares the observed total over `cells` with its predictive distribution.
/// Two-sided by default (twice the smaller tail, capped at 1); one-sided
/// reports the upper tail.
AggregateCheck aggregate_check(const PredictiveEnsemble& ensemble, const ODDataset& data,
                               const std::vector<std::size_t>& cells, bool one_sided = false);

/// Streaming accumulator for the conditional Poisson deviance -2 log p(y | beta, u).
class HierarchicalDeviance {
public:
    explicit HierarchicalDeviance(const ODDataset& data);

    void add(const ParamPoint& params, const Eigen::VectorXd& u);
    std::size_t count() const { return count_; }
    double mean_deviance() const;
    /// Deviance at the running means of beta and u.
    double deviance_at_mean() const;

private:
    const ODDataset* data_;
    std::size_t count_ = 0;
    double deviance_sum_ = 0.0;
    Eigen::VectorXd beta_sum_;
    Eigen::VectorXd u_sum_;
};

double conditional_poisson_deviance(const ODDataset& data, const Eigen::VectorXd& beta, const Eigen::VectorXd& u);

struct CriteriaReport {
    int k = 0;                   ///< parameter count p + 2
    std::size_t n = 0;
    double mean_deviance = 0.0;  ///< posterior mean of -2 marginal log-likelihood
    double deviance_at_mean = 0.0;
    double pd_marginal = 0.0;
    double aic = 0.0;
    double bic = 0.0;
    double dic_marginal = 0.0;
    std::optional<double> pd_hierarchical;
    std::optional<double> dic_hierarchical;
};

/// Hierarchical DIC over at most this many evenly spaced draws.
inline constexpr std::size_t kHierarchicalDicDraws = 500;

/// Marginal criteria from every pooled draw. When `ensemble` is given, the
/// hierarchical DIC is computed from its rows (first kHierarchicalDicDraws
/// evenly spaced). PLN with an ensemble throws DomainError.
CriteriaReport criteria(const ChainSet& chains, const ODDataset& data, const ModelSpec& spec,
                        const PredictiveEnsemble* ensemble = nullptr);

/// Same hierarchical DIC without materializing an ensemble: draws u on the fly.
CriteriaReport criteria_streaming(const ChainSet& chains, const ODDataset& data, const ModelSpec& spec,
                                  std::uint64_t seed);

}  // namespace odmix
