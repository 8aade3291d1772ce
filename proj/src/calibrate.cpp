#include "odmix/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

#include "odmix/errors.hpp"

namespace odmix {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Eigen::VectorXd pack(const ParamPoint& p) {
    Eigen::VectorXd x(p.beta.size() + 1);
    x.head(p.beta.size()) = p.beta;
    x[p.beta.size()] = std::log(p.dispersion);
    return x;
}

ParamPoint unpack(const Eigen::VectorXd& x) {
    const Eigen::Index k = x.size() - 1;
    return {x.head(k), std::exp(x[k])};
}

// Marginal log-likelihood in (beta, eta = log dispersion) with its gradient.
class Objective {
public:
    Objective(const ModelSpec& spec, const ODDataset& data, double bound)
        : post_(spec, data), bound_(bound),
          analytic_beta_(!(spec.family == Family::PLN &&
                           spec.pln.method == PlnIntegration::Method::montecarlo)) {}

    double value(const Eigen::VectorXd& x) const {
        try {
            const double v = post_.log_likelihood(unpack(x));
            return std::isfinite(v) ? v : kNegInf;
        } catch (const NumericalError&) {
            return kNegInf;
        }
    }

    Eigen::VectorXd gradient(const Eigen::VectorXd& x) const {
        const Eigen::Index k = x.size() - 1;
        Eigen::VectorXd g(x.size());
        if (analytic_beta_) {
            g.head(k) = post_.log_likelihood_gradient(unpack(x));
        } else {
            for (Eigen::Index j = 0; j < k; ++j) g[j] = central_difference(x, j);
        }
        g[k] = central_difference(x, k);
        return g;
    }

    // Central differences of the gradient, symmetrized.
    Eigen::MatrixXd hessian(const Eigen::VectorXd& x) const {
        const Eigen::Index d = x.size();
        Eigen::MatrixXd h(d, d);
        for (Eigen::Index j = 0; j < d; ++j) {
            const double step = 1e-4 * std::max(1.0, std::abs(x[j]));
            Eigen::VectorXd up = x, dn = x;
            up[j] += step;
            dn[j] -= step;
            h.col(j) = (gradient(up) - gradient(dn)) / (2.0 * step);
        }
        return 0.5 * (h + h.transpose());
    }

    double bound() const { return bound_; }

private:
    double central_difference(const Eigen::VectorXd& x, Eigen::Index j) const {
        const double step = 1e-5 * std::max(1.0, std::abs(x[j]));
        Eigen::VectorXd up = x, dn = x;
        up[j] += step;
        dn[j] -= step;
        return (value(up) - value(dn)) / (2.0 * step);
    }

    Posterior post_;
    double bound_;
    bool analytic_beta_;
};

// Zeroes the log-dispersion component when it pushes past an active guard.
Eigen::VectorXd projected(const Eigen::VectorXd& g, const Eigen::VectorXd& x, double bound) {
    Eigen::VectorXd out = g;
    const Eigen::Index k = x.size() - 1;
    if ((x[k] >= bound && g[k] > 0.0) || (x[k] <= -bound && g[k] < 0.0)) out[k] = 0.0;
    return out;
}

void clamp_dispersion(Eigen::VectorXd& x, double bound) {
    const Eigen::Index k = x.size() - 1;
    x[k] = std::clamp(x[k], -bound, bound);
}

struct TraceEntry {
    int iteration;
    double value;
    double gradient_norm;
};

std::string trajectory_tail(const std::deque<TraceEntry>& trace) {
    std::ostringstream os;
    os << "trajectory tail:";
    for (const auto& t : trace) {
        os << " [iter " << t.iteration << " loglik " << t.value << " |grad| " << t.gradient_norm << "]";
    }
    return os.str();
}

Eigen::MatrixXd initial_inverse_hessian(const ODDataset& data, const ParamPoint& p) {
    const Eigen::Index k = data.X.cols();
    Eigen::VectorXd mu = (data.X * p.beta).array().exp();
    Eigen::VectorXd w = mu.array() / (1.0 + mu.array() / std::max(p.dispersion, 1e-3));
    Eigen::MatrixXd info = data.X.transpose() * w.asDiagonal() * data.X;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(k + 1, k + 1);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        h.topLeftCorner(k, k) = ldlt.solve(Eigen::MatrixXd::Identity(k, k));
    } else {
        h.topLeftCorner(k, k).setIdentity();
        h.topLeftCorner(k, k) /= static_cast<double>(data.size());
    }
    h(k, k) = 10.0 / static_cast<double>(data.size());
    return h;
}

}  // namespace

ParamPoint initial_point(Family family, const ODDataset& data) {
    const Eigen::MatrixXd& X = data.X;
    const Eigen::VectorXd& y = data.y;
    Eigen::VectorXd eta = (y.array() + 0.5).log();
    Eigen::VectorXd beta;
    for (int step = 0; step < 2; ++step) {
        const Eigen::VectorXd mu = eta.array().exp();
        const Eigen::VectorXd z = eta.array() + (y - mu).array() / mu.array();
        const Eigen::MatrixXd xtw = X.transpose() * mu.asDiagonal();
        beta = (xtw * X).ldlt().solve(xtw * z);
        eta = (X * beta).cwiseMax(-30.0).cwiseMin(30.0);
    }
    const Eigen::VectorXd mu = eta.array().exp();
    // Var y = mu + v mu^2 for PG and PIG (v = 1/dispersion); PLN has v = e^{s2} - 1.
    const double excess = ((y - mu).array().square() - mu.array()).sum();
    const double v = std::max(excess / mu.squaredNorm(), 1e-4);
    const double dispersion = family == Family::PLN ? std::log1p(v) : 1.0 / v;
    return {beta, std::clamp(dispersion, 1e-6, 1e6)};
}

MlFit fit_ml(const ModelSpec& spec, const ODDataset& data, const FitOptions& options) {
    return fit_ml(spec, data, initial_point(spec.family, data), options);
}

MlFit fit_ml(const ModelSpec& spec, const ODDataset& data, const ParamPoint& init, const FitOptions& options) {
    data.validate();
    if (!(options.tol > 0.0)) throw ValidationError("fit tolerance must be positive");
    if (init.beta.size() != data.X.cols()) throw ValidationError("initial beta has the wrong length");
    if (!(init.dispersion > 0.0)) throw ValidationError("initial dispersion must be positive");

    const Objective f(spec, data, options.log_dispersion_bound);
    const double bound = options.log_dispersion_bound;
    Eigen::VectorXd x = pack(init);
    clamp_dispersion(x, bound);
    double fx = f.value(x);
    if (!std::isfinite(fx)) throw NumericalError("log-likelihood is not finite at the starting point");
    Eigen::VectorXd g = f.gradient(x);
    Eigen::MatrixXd hinv = initial_inverse_hessian(data, unpack(x));
    std::deque<TraceEntry> trace;

    int iter = 0;
    auto gnorm = [&] { return projected(g, x, bound).lpNorm<Eigen::Infinity>(); };

    for (; iter < options.max_iter && gnorm() >= options.tol; ++iter) {
        trace.push_back({iter, fx, gnorm()});
        if (trace.size() > 5) trace.pop_front();

        Eigen::VectorXd dir = hinv * g;
        if (dir.dot(g) <= 0.0) {  // lost positive definiteness
            hinv = initial_inverse_hessian(data, unpack(x));
            dir = hinv * g;
        }
        const double cap = 5.0;
        if (dir.lpNorm<Eigen::Infinity>() > cap) dir *= cap / dir.lpNorm<Eigen::Infinity>();

        double t = 1.0;
        Eigen::VectorXd xn;
        double fn = kNegInf;
        for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
            xn = x + t * dir;
            clamp_dispersion(xn, bound);
            fn = f.value(xn);
            if (std::isfinite(fn) && fn >= fx + 1e-4 * g.dot(xn - x)) break;
        }
        if (!std::isfinite(fn) || fn < fx) break;  // line search stalled; Newton polish below

        const Eigen::VectorXd gn = f.gradient(xn);
        const Eigen::VectorXd s = xn - x;
        const Eigen::VectorXd yv = g - gn;  // gradient of the negated objective
        const double sy = s.dot(yv);
        if (sy > 1e-12 * s.norm() * yv.norm()) {
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(x.size(), x.size());
            hinv = (I - rho * s * yv.transpose()) * hinv * (I - rho * yv * s.transpose()) + rho * s * s.transpose();
        }
        x = xn;
        fx = fn;
        g = gn;
    }

    // Newton polish on the finite-difference Hessian.
    Eigen::MatrixXd hess = f.hessian(x);
    for (int polish = 0; polish < 8 && gnorm() >= options.tol; ++polish, ++iter) {
        trace.push_back({iter, fx, gnorm()});
        if (trace.size() > 5) trace.pop_front();
        Eigen::LDLT<Eigen::MatrixXd> ldlt(-hess);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) break;
        Eigen::VectorXd dir = ldlt.solve(projected(g, x, bound));
        double t = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 30; ++ls, t *= 0.5) {
            Eigen::VectorXd xn = x + t * dir;
            clamp_dispersion(xn, bound);
            const double fn = f.value(xn);
            if (std::isfinite(fn) && fn >= fx - 1e-10 * std::abs(fx)) {
                x = xn;
                fx = fn;
                moved = true;
                break;
            }
        }
        if (!moved) break;
        g = f.gradient(x);
        hess = f.hessian(x);
    }

    MlFit fit;
    fit.iterations = iter;
    fit.log_likelihood = fx;
    fit.gradient_norm = gnorm();
    fit.converged = fit.gradient_norm < options.tol;
    if (!fit.converged) {
        throw ConvergenceError("ML fit did not converge after " + std::to_string(iter) +
                               " iterations (|grad| = " + std::to_string(fit.gradient_norm) + "); " +
                               trajectory_tail(trace));
    }

    const ParamPoint p = unpack(x);
    fit.beta_hat = p.beta;
    fit.dispersion_hat = p.dispersion;
    const Eigen::Index k = p.beta.size();
    const Eigen::MatrixXd info = -hess;
    const bool at_bound = std::abs(x[k]) >= bound - 1e-9;

    Eigen::LDLT<Eigen::MatrixXd> full(info);
    if (!at_bound && full.info() == Eigen::Success && full.isPositive() &&
        full.vectorD().minCoeff() > 1e-12 * full.vectorD().maxCoeff()) {
        const Eigen::MatrixXd cov = full.solve(Eigen::MatrixXd::Identity(k + 1, k + 1));
        fit.cov_beta = cov.topLeftCorner(k, k);
        fit.var_dispersion = p.dispersion * p.dispersion * cov(k, k);
    } else {
        // Flat likelihood in the dispersion: report the beta block on its own.
        const Eigen::MatrixXd ib = info.topLeftCorner(k, k);
        Eigen::LDLT<Eigen::MatrixXd> beta_only(ib);
        if (beta_only.info() != Eigen::Success || !beta_only.isPositive()) {
            throw NumericalError("observed information is singular; try rescaling or centring the covariates");
        }
        fit.cov_beta = beta_only.solve(Eigen::MatrixXd::Identity(k, k));
        fit.var_dispersion = p.dispersion * p.dispersion;
        fit.dispersion_at_bound = true;
    }
    fit.cov_beta = 0.5 * (fit.cov_beta + fit.cov_beta.transpose());
    if (!(fit.cov_beta.diagonal().array() > 0.0).all()) {
        throw NumericalError("observed information is singular; try rescaling or centring the covariates");
    }
    return fit;
}

void ProposalSpec::validate() const {
    if (beta_cov.rows() != beta_mean.size() || beta_cov.cols() != beta_mean.size()) {
        throw ValidationError("proposal covariance dimension does not match its mean");
    }
    if (!(dispersion.shape > 0.0) || !(dispersion.rate > 0.0) || !std::isfinite(dispersion.shape) ||
        !std::isfinite(dispersion.rate)) {
        throw ValidationError("proposal gamma shape and rate must be positive");
    }
    if (beta_mean.size() > 0) {
        Eigen::LLT<Eigen::MatrixXd> llt(beta_cov);
        if (llt.info() != Eigen::Success) throw ValidationError("proposal covariance is not positive definite");
    }
}

GammaProposal moment_matched_gamma(double mean, double variance) {
    if (!(mean > 0.0) || !(variance > 0.0)) throw DomainError("gamma moment matching needs positive mean and variance");
    return {mean * mean / variance, mean / variance};
}

ProposalSpec build_proposals(const MlFit& fit) {
    if (!fit.converged) throw ConvergenceError("refusing to build proposals from a non-converged fit");
    ProposalSpec out;
    out.beta_mean = fit.beta_hat;
    out.beta_cov = fit.cov_beta;
    out.dispersion = moment_matched_gamma(fit.dispersion_hat, fit.var_dispersion);
    out.validate();
    return out;
}

}  // namespace odmix
