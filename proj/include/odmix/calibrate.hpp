#pragma once

#include <vector>

#include <Eigen/Dense>

#include "odmix/model.hpp"

namespace odmix {

struct MlFit {
    Eigen::VectorXd beta_hat;
    double dispersion_hat = 1.0;
    Eigen::MatrixXd cov_beta;
    double var_dispersion = 0.0;
    bool converged = false;
    int iterations = 0;
    double log_likelihood = 0.0;
    double gradient_norm = 0.0;  ///< infinity norm at the returned point
    /// Log-dispersion sat on its guard; var_dispersion is then a placeholder
    /// (dispersion_hat^2) and cov_beta comes from the beta block alone.
    bool dispersion_at_bound = false;
};

struct FitOptions {
    double tol = 1e-4;
    int max_iter = 300;
    double log_dispersion_bound = 25.0;
};

/// Two Fisher-scoring Poisson steps for beta, then a moment estimate of the
/// dispersion.
ParamPoint initial_point(Family family, const ODDataset& data);

/// Maximizes the marginal log-likelihood (no priors) over (beta, log dispersion)
/// by BFGS, then polishes with Newton steps on the finite-difference Hessian.
/// Throws ConvergenceError with the trajectory tail when max_iter is hit and
/// NumericalError when the observed information cannot be inverted.
MlFit fit_ml(const ModelSpec& spec, const ODDataset& data, const ParamPoint& init,
             const FitOptions& options = {});
MlFit fit_ml(const ModelSpec& spec, const ODDataset& data, const FitOptions& options = {});

struct GammaProposal {
    double shape = 1.0;
    double rate = 1.0;

    double mean() const { return shape / rate; }
    double variance() const { return shape / (rate * rate); }
};

/// Independence proposal: N(beta_mean, beta_cov) x Gamma(shape, rate).
struct ProposalSpec {
    Eigen::VectorXd beta_mean;
    Eigen::MatrixXd beta_cov;
    GammaProposal dispersion;

    void validate() const;
};

/// Moment-matched gamma on the dispersion plus the ML normal on beta.
ProposalSpec build_proposals(const MlFit& fit);

/// Gamma with the given mean and variance.
GammaProposal moment_matched_gamma(double mean, double variance);

}  // namespace odmix
