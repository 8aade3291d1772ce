#include "odmix/model.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/QR>

#include "odmix/errors.hpp"

namespace odmix {

std::string_view to_string(Family family) {
    switch (family) {
        case Family::PG: return "PG";
        case Family::PLN: return "PLN";
        case Family::PIG: return "PIG";
    }
    return "?";
}

Family family_from_string(std::string_view name) {
    if (name == "PG" || name == "pg") return Family::PG;
    if (name == "PLN" || name == "pln") return Family::PLN;
    if (name == "PIG" || name == "pig") return Family::PIG;
    throw ValidationError("unknown family '" + std::string(name) + "' (expected PG, PLN or PIG)");
}

std::string_view dispersion_name(Family family) {
    switch (family) {
        case Family::PG: return "theta";
        case Family::PLN: return "sigma2";
        case Family::PIG: return "zeta";
    }
    return "dispersion";
}

namespace {

std::vector<int> dependent_columns(const Eigen::MatrixXd& X) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    std::vector<int> out;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < X.cols(); ++k) out.push_back(perm[k]);
    return out;
}

std::string describe_columns(const std::vector<int>& cols, const std::vector<std::string>& names) {
    std::ostringstream os;
    for (std::size_t k = 0; k < cols.size(); ++k) {
        if (k) os << ", ";
        const auto c = static_cast<std::size_t>(cols[k]);
        os << (c < names.size() ? names[c] : "column " + std::to_string(c));
    }
    return os.str();
}

}  // namespace

void ODDataset::validate() const {
    if (zones < 1) throw ValidationError("dataset needs at least one zone");
    const auto n = static_cast<Eigen::Index>(zones) * zones;
    if (y.size() != n) {
        throw ValidationError("shape error: " + std::to_string(y.size()) + " observations for " +
                              std::to_string(zones) + " zones (expected m^2 = " + std::to_string(n) + ")");
    }
    if (X.rows() != n) throw ValidationError("shape error: design matrix rows differ from observation count");
    if (!covariate_names.empty() && covariate_names.size() != static_cast<std::size_t>(X.cols())) {
        throw ValidationError("covariate name count differs from design columns");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(y[i] >= 0.0) || y[i] != std::floor(y[i]) || !std::isfinite(y[i])) {
            throw ValidationError("value error: observation " + std::to_string(i) +
                                  " is not a non-negative integer count");
        }
    }
    if (!X.allFinite()) throw ValidationError("design matrix has non-finite entries");
    const auto bad = dependent_columns(X);
    if (!bad.empty()) {
        throw ValidationError("design error: design matrix is rank deficient; dependent columns: " +
                              describe_columns(bad, covariate_names));
    }
}

ODDataset ODDataset::with_columns(const std::vector<int>& columns) const {
    ODDataset out;
    out.zones = zones;
    out.y = y;
    out.X.resize(X.rows(), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t k = 0; k < columns.size(); ++k) {
        out.X.col(static_cast<Eigen::Index>(k)) = X.col(columns[k]);
        if (!covariate_names.empty()) out.covariate_names.push_back(covariate_names[columns[k]]);
    }
    return out;
}

void ModelSpec::validate(int coefficients) const {
    if (!(a > 0.0) || !std::isfinite(a)) throw ValidationError("hyperparameter a must be positive");
    if (prior_cov.rows() != coefficients || prior_cov.cols() != coefficients) {
        throw ValidationError("prior covariance dimension does not match the design");
    }
    if (!prior_cov.isApprox(prior_cov.transpose(), 1e-10)) {
        throw ValidationError("prior covariance is not symmetric");
    }
    pln.validate();
}

Eigen::MatrixXd build_gprior(const Eigen::MatrixXd& X) {
    const auto bad = dependent_columns(X);
    if (!bad.empty()) {
        throw ValidationError("singular design: dependent columns " + describe_columns(bad, {}));
    }
    const Eigen::MatrixXd xtx = X.transpose() * X;
    Eigen::LLT<Eigen::MatrixXd> llt(xtx);
    if (llt.info() != Eigen::Success) throw ValidationError("singular design: X'X is not positive definite");
    Eigen::MatrixXd cov = static_cast<double>(X.rows()) *
                          llt.solve(Eigen::MatrixXd::Identity(X.cols(), X.cols()));
    return 0.5 * (cov + cov.transpose());
}

ModelSpec make_spec(Family family, const ODDataset& data, double a) {
    ModelSpec spec;
    spec.family = family;
    spec.a = a;
    spec.prior_cov = build_gprior(data.X);
    return spec;
}

LogPmfWithLatentMean observation_loglik_with_latent_mean(Family family, Count y, double mu,
                                                         double dispersion, const PlnIntegration& pln) {
    switch (family) {
        case Family::PG: return nb_logpmf_with_latent_mean(y, mu, dispersion);
        case Family::PIG: return pig_logpmf_with_latent_mean(y, mu, dispersion);
        case Family::PLN:
            if (pln.method == PlnIntegration::Method::quadrature) {
                return pln_logpmf_quadrature_with_latent_mean(y, mu, dispersion, pln.order);
            }
            throw DomainError("latent means for the lognormal family need quadrature integration");
    }
    throw DomainError("unknown family");
}

double observation_loglik(Family family, Count y, double mu, double dispersion, const PlnIntegration& pln) {
    switch (family) {
        case Family::PG: return nb_logpmf(y, mu, dispersion);
        case Family::PIG: return pig_logpmf(y, mu, dispersion);
        case Family::PLN: return pln_logpmf(y, mu, dispersion, pln);
    }
    throw DomainError("unknown family");
}

Posterior::Posterior(ModelSpec spec, const ODDataset& data) : spec_(std::move(spec)), data_(&data) {
    spec_.validate(data.coefficients());
    prior_llt_.compute(spec_.prior_cov);
    if (prior_llt_.info() != Eigen::Success) {
        throw ValidationError("prior covariance is not positive definite");
    }
    const Eigen::MatrixXd L = prior_llt_.matrixL();
    const double log_det = 2.0 * L.diagonal().array().log().sum();
    prior_log_norm_ = -0.5 * (static_cast<double>(data.coefficients()) * std::log(2.0 * std::numbers::pi) + log_det);
}

Eigen::VectorXd Posterior::means(const Eigen::VectorXd& beta) const {
    if (beta.size() != data_->X.cols()) throw ValidationError("coefficient vector has the wrong length");
    Eigen::VectorXd eta = data_->X * beta;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        if (!(std::abs(eta[i]) <= kMaxLinearPredictor)) {
            throw NumericalError("linear predictor out of range at row " + std::to_string(i) + " (" +
                                 std::to_string(eta[i]) + ")");
        }
    }
    return eta.array().exp();
}

double Posterior::observation(std::size_t i, double mu, double dispersion) const {
    const Count y = data_->count(i);
    if (spec_.family == Family::PLN && spec_.pln.method == PlnIntegration::Method::montecarlo) {
        Rng rng = make_stream(spec_.pln.seed, i);
        return pln_logpmf_montecarlo(y, mu, dispersion, spec_.pln.draws, rng);
    }
    return observation_loglik(spec_.family, y, mu, dispersion, spec_.pln);
}

double Posterior::log_likelihood(const ParamPoint& point) const {
    if (!(point.dispersion > 0.0) || !std::isfinite(point.dispersion)) {
        throw DomainError("dispersion must be positive and finite");
    }
    const Eigen::VectorXd mu = means(point.beta);
    double total = 0.0;
    for (std::size_t i = 0; i < data_->size(); ++i) {
        total += observation(i, mu[static_cast<Eigen::Index>(i)], point.dispersion);
    }
    return total;
}

double Posterior::log_prior(const ParamPoint& point) const {
    const Eigen::VectorXd z = prior_llt_.matrixL().solve(point.beta);
    const double log_beta = prior_log_norm_ - 0.5 * z.squaredNorm();
    const double a = spec_.a;
    const double d = point.dispersion;
    const double base = a * std::log(a) - std::lgamma(a);
    const double log_disp = spec_.family == Family::PLN
                                ? base - (a + 1.0) * std::log(d) - a / d   // InvGamma(a, a)
                                : base + (a - 1.0) * std::log(d) - a * d;  // Gamma(a, a)
    return log_beta + log_disp;
}

double Posterior::log_posterior(const ParamPoint& point) const {
    return log_likelihood(point) + log_prior(point);
}

Eigen::VectorXd Posterior::log_likelihood_gradient(const ParamPoint& point) const {
    const Eigen::VectorXd mu = means(point.beta);
    Eigen::VectorXd score(mu.size());
    for (std::size_t i = 0; i < data_->size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        const auto r = observation_loglik_with_latent_mean(spec_.family, data_->count(i), mu[k],
                                                           point.dispersion, spec_.pln);
        // d ln p / d eta = mu (y / mu - E[u|y]) = y - mu E[u|y].
        score[k] = data_->y[k] - mu[k] * r.latent_mean;
    }
    return data_->X.transpose() * score;
}

Eigen::VectorXd Posterior::log_posterior_gradient(const ParamPoint& point) const {
    return log_likelihood_gradient(point) - prior_llt_.solve(point.beta);
}

double log_posterior(const ModelSpec& spec, const ODDataset& data, const ParamPoint& point) {
    return Posterior(spec, data).log_posterior(point);
}

MarginalMoments marginal_moments(Family family, double mu, double dispersion) {
    if (!(mu > 0.0) || !(dispersion > 0.0)) throw DomainError("marginal_moments: invalid parameters");
    switch (family) {
        case Family::PG: return {mu, mu + mu * mu / dispersion};
        case Family::PLN: return {mu, mu + mu * mu * std::expm1(dispersion)};
        case Family::PIG: return {mu, mu + mu * mu / dispersion};  // Var u = 1 / zeta
    }
    throw DomainError("unknown family");
}

MarginalMoments marginal_moments(Family family, const ParamPoint& point, const Eigen::VectorXd& x) {
    const double eta = point.beta.dot(x);
    if (!(std::abs(eta) <= kMaxLinearPredictor)) throw NumericalError("linear predictor out of range");
    return marginal_moments(family, std::exp(eta), point.dispersion);
}

double draw_mixing_effect(Family family, double dispersion, Rng& rng) {
    switch (family) {
        case Family::PG: return gamma_draw(dispersion, dispersion, rng);
        case Family::PLN: return std::exp(-0.5 * dispersion + std::sqrt(dispersion) * standard_normal(rng));
        case Family::PIG: return ig_sample({1.0, dispersion}, rng);
    }
    throw DomainError("unknown family");
}

double additive_intercept(double multiplicative, double sigma2) { return multiplicative - 0.5 * sigma2; }
double multiplicative_intercept(double additive, double sigma2) { return additive + 0.5 * sigma2; }

}  // namespace odmix
