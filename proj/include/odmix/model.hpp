#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "odmix/distmath.hpp"

namespace odmix {

/// Mixing density of the latent multiplicative effect u (E u = 1).
enum class Family {
    PG,   ///< gamma mixing, negative binomial marginal; dispersion theta
    PLN,  ///< lognormal mixing; dispersion sigma^2
    PIG,  ///< inverse Gaussian mixing; dispersion zeta
};

std::string_view to_string(Family family);
Family family_from_string(std::string_view name);
/// Name of the dispersion parameter ("theta", "sigma2", "zeta").
std::string_view dispersion_name(Family family);

/// An m x m OD matrix in lexicographic order (T11, T12, ..., Tmm) with its
/// design matrix. Column 0 of X is the intercept.
struct ODDataset {
    int zones = 0;
    Eigen::VectorXd y;
    Eigen::MatrixXd X;
    std::vector<std::string> covariate_names;  ///< one per column of X

    std::size_t size() const { return static_cast<std::size_t>(y.size()); }
    int coefficients() const { return static_cast<int>(X.cols()); }
    int origin_of(std::size_t i) const { return static_cast<int>(i) / zones; }
    int destination_of(std::size_t i) const { return static_cast<int>(i) % zones; }
    Count count(std::size_t i) const { return static_cast<Count>(y[static_cast<Eigen::Index>(i)]); }

    /// Throws ValidationError on shape, count or rank problems.
    void validate() const;

    /// Same observations with a subset of design columns (by index).
    ODDataset with_columns(const std::vector<int>& columns) const;
};

struct ModelSpec {
    Family family = Family::PIG;
    double a = 1e-3;             ///< Gamma(a, a) / InvGamma(a, a) hyperprior
    Eigen::MatrixXd prior_cov;   ///< Sigma_beta
    PlnIntegration pln{};

    void validate(int coefficients) const;
};

/// Regression coefficients plus the family's dispersion (theta, sigma^2 or zeta).
struct ParamPoint {
    Eigen::VectorXd beta;
    double dispersion = 1.0;
};

/// Sigma_beta = n (X'X)^{-1}.
Eigen::MatrixXd build_gprior(const Eigen::MatrixXd& X);

/// Convenience: a spec with the g-prior for `data`.
ModelSpec make_spec(Family family, const ODDataset& data, double a = 1e-3);

/// Marginal log pmf of one observation, all constants retained.
double observation_loglik(Family family, Count y, double mu, double dispersion,
                          const PlnIntegration& pln = {});

/// Same plus E[u | y], used for analytic scores: d/dmu = y/mu - E[u|y].
LogPmfWithLatentMean observation_loglik_with_latent_mean(Family family, Count y, double mu,
                                                         double dispersion,
                                                         const PlnIntegration& pln = {});

/// Linear predictor guard: |x'beta| above this is an evaluation error.
inline constexpr double kMaxLinearPredictor = 700.0;

/// Evaluates the posterior pieces for one dataset. Caches the prior
/// factorization; const member functions are safe to call concurrently.
class Posterior {
public:
    Posterior(ModelSpec spec, const ODDataset& data);

    const ModelSpec& spec() const { return spec_; }
    const ODDataset& data() const { return *data_; }

    /// Means exp(X beta); throws NumericalError naming the first row whose
    /// linear predictor leaves [-700, 700].
    Eigen::VectorXd means(const Eigen::VectorXd& beta) const;

    double log_likelihood(const ParamPoint& point) const;
    double log_prior(const ParamPoint& point) const;
    double log_posterior(const ParamPoint& point) const;

    /// Analytic gradient of the marginal log-likelihood in beta.
    Eigen::VectorXd log_likelihood_gradient(const ParamPoint& point) const;
    Eigen::VectorXd log_posterior_gradient(const ParamPoint& point) const;

    double operator()(const ParamPoint& point) const { return log_posterior(point); }

private:
    double observation(std::size_t i, double mu, double dispersion) const;

    ModelSpec spec_;
    const ODDataset* data_;
    Eigen::LLT<Eigen::MatrixXd> prior_llt_;
    double prior_log_norm_ = 0.0;
};

double log_posterior(const ModelSpec& spec, const ODDataset& data, const ParamPoint& point);

struct MarginalMoments {
    double mean = 0.0;
    double variance = 0.0;
};

MarginalMoments marginal_moments(Family family, double mu, double dispersion);
MarginalMoments marginal_moments(Family family, const ParamPoint& point, const Eigen::VectorXd& x);

/// Draws u from the family's mixing density with E u = 1.
double draw_mixing_effect(Family family, double dispersion, Rng& rng);

/// The lognormal family is written multiplicatively (u ~ LN(-s2/2, s2)). The
/// additive GLMM form (eps ~ N(0, s2)) carries intercept beta0 - s2/2.
double additive_intercept(double multiplicative_intercept, double sigma2);
double multiplicative_intercept(double additive_intercept, double sigma2);

}  // namespace odmix
