#include "odmix/predict.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "odmix/errors.hpp"

namespace odmix {

double draw_latent_u(Family family, Count y, double mu, double dispersion, Rng& rng) {
    if (y < 0) throw DomainError("draw_latent_u: negative count");
    if (!(mu > 0.0) || !(dispersion > 0.0)) throw DomainError("draw_latent_u: mu and dispersion must be positive");
    const double yd = static_cast<double>(y);
    switch (family) {
        case Family::PG: return gamma_draw(yd + dispersion, mu + dispersion, rng);
        case Family::PIG: return gig_sample({yd - 0.5, 2.0 * mu + dispersion, dispersion}, rng);
        case Family::PLN: break;
    }
    throw DomainError("the lognormal family has no closed-form conditional for u");
}

double draw_conditional_dispersion(Family family, const Eigen::VectorXd& u, double a, Rng& rng) {
    if (!(a > 0.0)) throw DomainError("hyperparameter a must be positive");
    if (u.size() == 0 || !(u.array() > 0.0).all()) throw DomainError("latent effects must be positive");
    const double shape = a + 0.5 * static_cast<double>(u.size());
    switch (family) {
        case Family::PIG: {
            const double rate = a + ((u.array() - 1.0).square() / (2.0 * u.array())).sum();
            return gamma_draw(shape, rate, rng);
        }
        case Family::PLN: {
            const double scale = a + 0.5 * u.array().log().square().sum();
            return 1.0 / gamma_draw(shape, scale, rng);
        }
        case Family::PG: break;
    }
    throw DomainError("theta has no conjugate conditional given u alone");
}

std::vector<std::size_t> evenly_spaced(std::size_t total, std::size_t count) {
    std::vector<std::size_t> out;
    if (total == 0) return out;
    if (count == 0 || count >= total) {
        out.resize(total);
        for (std::size_t i = 0; i < total; ++i) out[i] = i;
        return out;
    }
    if (count == 1) return {0};
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        // Integer arithmetic keeps the selection exact and monotone.
        out.push_back(k * (total - 1) / (count - 1));
    }
    return out;
}

void for_each_predictive_row(const std::vector<ParamPoint>& draws, const ODDataset& data, Family family,
                             std::uint64_t seed, const PredictiveRowFn& fn) {
    if (family == Family::PLN) {
        throw DomainError("predictive simulation is not available for the lognormal family");
    }
    const auto n = static_cast<Eigen::Index>(data.size());
    Eigen::VectorXd u(n), y(n);
    for (std::size_t m = 0; m < draws.size(); ++m) {
        const ParamPoint& p = draws[m];
        Rng rng = make_stream(seed, m);
        const Eigen::VectorXd eta = data.X * p.beta;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!(std::abs(eta[i]) <= kMaxLinearPredictor)) {
                throw NumericalError("linear predictor out of range at row " + std::to_string(i) +
                                     " of predictive draw " + std::to_string(m));
            }
            const double mu = std::exp(eta[i]);
            u[i] = draw_latent_u(family, data.count(static_cast<std::size_t>(i)), mu, p.dispersion, rng);
            y[i] = static_cast<double>(poisson_draw(mu * u[i], rng));
        }
        fn(m, p, u, y);
    }
}

PredictiveEnsemble predictive_draws(const std::vector<ParamPoint>& draws, const ODDataset& data, Family family,
                                    std::uint64_t seed) {
    PredictiveEnsemble e;
    e.family = family;
    e.params = draws;
    e.draw_index.resize(draws.size());
    for (std::size_t m = 0; m < draws.size(); ++m) e.draw_index[m] = m;
    const auto rows = static_cast<Eigen::Index>(draws.size());
    const auto n = static_cast<Eigen::Index>(data.size());
    e.u.resize(rows, n);
    e.y_pred.resize(rows, n);
    for_each_predictive_row(draws, data, family, seed,
                            [&](std::size_t m, const ParamPoint&, const Eigen::VectorXd& u, const Eigen::VectorXd& y) {
                                e.u.row(static_cast<Eigen::Index>(m)) = u.transpose();
                                e.y_pred.row(static_cast<Eigen::Index>(m)) = y.transpose();
                            });
    return e;
}

PredictiveEnsemble predictive_draws(const ChainSet& chains, const ODDataset& data, Family family,
                                    const PredictiveOptions& options) {
    const auto pooled = chains.pooled();
    if (pooled.empty()) throw ValidationError("no posterior draws to predict from");
    const auto idx = evenly_spaced(pooled.size(), options.draws);
    std::vector<ParamPoint> selected;
    selected.reserve(idx.size());
    for (auto i : idx) selected.push_back(pooled[i]);
    PredictiveEnsemble e = predictive_draws(selected, data, family, options.seed);
    e.draw_index = idx;
    return e;
}

std::array<double, 3> ppc_statistics(const Eigen::VectorXd& y, const Eigen::VectorXd& conditional_mean) {
    std::array<double, 3> t{0.0, 0.0, 0.0};
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double r = y[i] - conditional_mean[i];
        t[0] += r;
        t[1] += r * r;
        t[2] += -2.0 * poisson_logpmf(static_cast<Count>(y[i]), conditional_mean[i]);
    }
    return t;
}

PpcResult ppc_pvalues(const PredictiveEnsemble& ensemble, const ODDataset& data) {
    const auto rows = static_cast<Eigen::Index>(ensemble.rows());
    if (rows == 0) throw ValidationError("empty predictive ensemble");
    if (ensemble.y_pred.cols() != static_cast<Eigen::Index>(data.size())) {
        throw ValidationError("ensemble does not match the dataset size");
    }
    PpcResult r;
    r.observed.resize(rows, 3);
    r.replicated.resize(rows, 3);
    std::array<long, 3> exceed{0, 0, 0};
    for (Eigen::Index m = 0; m < rows; ++m) {
        const ParamPoint& p = ensemble.params[static_cast<std::size_t>(m)];
        const Eigen::VectorXd mean = (data.X * p.beta).array().exp() * ensemble.u.row(m).transpose().array();
        const auto obs = ppc_statistics(data.y, mean);
        const auto rep = ppc_statistics(ensemble.y_pred.row(m).transpose(), mean);
        for (int s = 0; s < 3; ++s) {
            r.observed(m, s) = obs[static_cast<std::size_t>(s)];
            r.replicated(m, s) = rep[static_cast<std::size_t>(s)];
            if (rep[static_cast<std::size_t>(s)] >= obs[static_cast<std::size_t>(s)]) ++exceed[static_cast<std::size_t>(s)];
        }
    }
    for (int s = 0; s < 3; ++s) {
        r.p_values[static_cast<std::size_t>(s)] = static_cast<double>(exceed[static_cast<std::size_t>(s)]) / rows;
    }
    return r;
}

DensityExport kernel_density(const std::vector<double>& samples, int grid_points) {
    if (samples.empty()) throw ValidationError("kernel density of an empty sample");
    if (grid_points < 2) throw ValidationError("kernel density grid needs at least two points");
    const double n = static_cast<double>(samples.size());
    double mean = 0.0;
    for (double x : samples) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : samples) ss += (x - mean) * (x - mean);
    const double sd = samples.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    std::vector<double> sorted = samples;
    std::sort(sorted.begin(), sorted.end());
    const double iqr = empirical_quantile(sorted, 0.75) - empirical_quantile(sorted, 0.25);
    double spread = sd;
    if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
    double h = 0.9 * spread * std::pow(n, -0.2);
    if (!(h > 0.0)) h = 0.5;  // degenerate sample: unit-count smoothing

    DensityExport out;
    out.bandwidth = h;
    const double lo = sorted.front() - 3.0 * h;
    const double hi = sorted.back() + 3.0 * h;
    const double step = (hi - lo) / (grid_points - 1);
    const double norm = 1.0 / (n * h * std::sqrt(2.0 * std::numbers::pi));
    out.grid.resize(static_cast<std::size_t>(grid_points));
    out.density.resize(static_cast<std::size_t>(grid_points));
    for (int g = 0; g < grid_points; ++g) {
        const double x = lo + step * g;
        double s = 0.0;
        for (double v : sorted) {
            const double z = (x - v) / h;
            s += std::exp(-0.5 * z * z);
        }
        out.grid[static_cast<std::size_t>(g)] = x;
        out.density[static_cast<std::size_t>(g)] = s * norm;
    }
    return out;
}

AggregateCheck aggregate_check(const PredictiveEnsemble& ensemble, const ODDataset& data,
                               const std::vector<std::size_t>& cells, bool one_sided) {
    if (cells.empty()) throw ValidationError("aggregate check needs a non-empty cell subset");
    if (ensemble.rows() == 0) throw ValidationError("empty predictive ensemble");
    for (auto c : cells) {
        if (c >= data.size()) throw ValidationError("cell index " + std::to_string(c) + " out of range");
    }
    AggregateCheck out;
    for (auto c : cells) out.observed += data.y[static_cast<Eigen::Index>(c)];
    const auto rows = static_cast<Eigen::Index>(ensemble.rows());
    out.sums.resize(ensemble.rows());
    long upper = 0, lower = 0;
    for (Eigen::Index m = 0; m < rows; ++m) {
        double s = 0.0;
        for (auto c : cells) s += ensemble.y_pred(m, static_cast<Eigen::Index>(c));
        out.sums[static_cast<std::size_t>(m)] = s;
        if (s >= out.observed) ++upper;
        if (s <= out.observed) ++lower;
    }
    out.upper_tail = static_cast<double>(upper) / rows;
    out.lower_tail = static_cast<double>(lower) / rows;
    out.p_value = one_sided ? out.upper_tail : std::min(1.0, 2.0 * std::min(out.upper_tail, out.lower_tail));
    out.density = kernel_density(out.sums);
    return out;
}

double conditional_poisson_deviance(const ODDataset& data, const Eigen::VectorXd& beta, const Eigen::VectorXd& u) {
    const Eigen::VectorXd eta = data.X * beta;
    double d = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        d += -2.0 * poisson_logpmf(data.count(static_cast<std::size_t>(i)), std::exp(eta[i]) * u[i]);
    }
    return d;
}

HierarchicalDeviance::HierarchicalDeviance(const ODDataset& data)
    : data_(&data),
      beta_sum_(Eigen::VectorXd::Zero(data.X.cols())),
      u_sum_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(data.size()))) {}

void HierarchicalDeviance::add(const ParamPoint& params, const Eigen::VectorXd& u) {
    deviance_sum_ += conditional_poisson_deviance(*data_, params.beta, u);
    beta_sum_ += params.beta;
    u_sum_ += u;
    ++count_;
}

double HierarchicalDeviance::mean_deviance() const {
    if (count_ == 0) throw ValidationError("no draws accumulated");
    return deviance_sum_ / static_cast<double>(count_);
}

double HierarchicalDeviance::deviance_at_mean() const {
    if (count_ == 0) throw ValidationError("no draws accumulated");
    const double c = static_cast<double>(count_);
    return conditional_poisson_deviance(*data_, beta_sum_ / c, u_sum_ / c);
}

namespace {

CriteriaReport marginal_criteria(const ChainSet& chains, const ODDataset& data, const ModelSpec& spec) {
    const auto pooled = chains.pooled();
    if (pooled.empty()) throw ValidationError("criteria need posterior draws");
    const Posterior post(spec, data);
    CriteriaReport r;
    r.n = data.size();
    r.k = data.coefficients() + 1;
    double dsum = 0.0;
    Eigen::VectorXd beta_mean = Eigen::VectorXd::Zero(data.X.cols());
    double disp_mean = 0.0;
    for (const auto& p : pooled) {
        dsum += -2.0 * post.log_likelihood(p);
        beta_mean += p.beta;
        disp_mean += p.dispersion;
    }
    const double m = static_cast<double>(pooled.size());
    r.mean_deviance = dsum / m;
    r.deviance_at_mean = -2.0 * post.log_likelihood({beta_mean / m, disp_mean / m});
    r.pd_marginal = r.mean_deviance - r.deviance_at_mean;
    r.aic = r.mean_deviance + 2.0 * r.k;
    r.bic = r.mean_deviance + r.k * std::log(static_cast<double>(r.n));
    r.dic_marginal = r.mean_deviance + r.pd_marginal;
    return r;
}

void set_hierarchical(CriteriaReport& r, const HierarchicalDeviance& h) {
    const double dbar = h.mean_deviance();
    const double pd = dbar - h.deviance_at_mean();
    r.pd_hierarchical = pd;
    r.dic_hierarchical = dbar + pd;
}

}  // namespace

CriteriaReport criteria(const ChainSet& chains, const ODDataset& data, const ModelSpec& spec,
                        const PredictiveEnsemble* ensemble) {
    CriteriaReport r = marginal_criteria(chains, data, spec);
    if (ensemble != nullptr) {
        if (spec.family == Family::PLN) {
            throw DomainError("hierarchical DIC is not available for the lognormal family");
        }
        HierarchicalDeviance h(data);
        for (auto m : evenly_spaced(ensemble->rows(), kHierarchicalDicDraws)) {
            h.add(ensemble->params[m], ensemble->u.row(static_cast<Eigen::Index>(m)).transpose());
        }
        set_hierarchical(r, h);
    }
    return r;
}

CriteriaReport criteria_streaming(const ChainSet& chains, const ODDataset& data, const ModelSpec& spec,
                                  std::uint64_t seed) {
    if (spec.family == Family::PLN) {
        throw DomainError("hierarchical DIC is not available for the lognormal family");
    }
    CriteriaReport r = marginal_criteria(chains, data, spec);
    const auto pooled = chains.pooled();
    std::vector<ParamPoint> selected;
    for (auto i : evenly_spaced(pooled.size(), kHierarchicalDicDraws)) selected.push_back(pooled[i]);
    HierarchicalDeviance h(data);
    for_each_predictive_row(selected, data, spec.family, seed,
                            [&](std::size_t, const ParamPoint& p, const Eigen::VectorXd& u, const Eigen::VectorXd&) {
                                h.add(p, u);
                            });
    set_hierarchical(r, h);
    return r;
}

}  // namespace odmix
