#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "odmix/errors.hpp"
#include "odmix/predict.hpp"
#include "oracles.hpp"

using namespace odmix;

namespace {

std::vector<double> sample_u(Family f, Count y, double mu, double disp, int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> xs(static_cast<std::size_t>(n));
    for (double& x : xs) x = draw_latent_u(f, y, mu, disp, rng);
    return xs;
}

// Conditional density of u given y, normalized by quadrature of the
// Poisson kernel times the mixing prior.
std::function<double(double)> conditional_log_density(Family f, Count y, double mu, double disp) {
    const double yd = static_cast<double>(y);
    auto log_prior = [=](double u) {
        if (f == Family::PG) return disp * std::log(disp) - std::lgamma(disp) + (disp - 1.0) * std::log(u) - disp * u;
        return 0.5 * (std::log(disp) - std::log(2.0 * std::numbers::pi) - 3.0 * std::log(u)) -
               disp * (u - 1.0) * (u - 1.0) / (2.0 * u);
    };
    auto unnorm = [=](double u) { return yd * std::log(u) - mu * u + log_prior(u); };
    const double centre = std::exp(oracle::argmax_unimodal([&](double s) { return unnorm(std::exp(s)) + s; }, -30, 15));
    const double peak = unnorm(centre);
    const double z = oracle::integrate_density([&](double u) { return unnorm(u) - peak; });
    const double log_z = peak + std::log(z);
    return [=](double u) { return unnorm(u) - log_z; };
}

ODDataset intercept_dataset(int zones, const std::vector<double>& y) {
    ODDataset d;
    d.zones = zones;
    d.y = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
    d.X = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(y.size()), 1);
    return d;
}

// Observed counts at the marginal quantiles (i + 1/2) / n, so the empirical
// distribution of y tracks the marginal pmf.
std::vector<double> quantile_counts(Family f, double mu, double disp, int n) {
    std::vector<double> cdf;
    double acc = 0.0;
    for (Count y = 0; acc < 1.0 - 1e-12 && y < 100000; ++y) {
        acc += std::exp(observation_loglik(f, y, mu, disp));
        cdf.push_back(acc);
    }
    std::vector<double> ys(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double q = (i + 0.5) / n;
        ys[static_cast<std::size_t>(i)] =
            static_cast<double>(std::lower_bound(cdf.begin(), cdf.end(), q) - cdf.begin());
    }
    return ys;
}

ChainSet fixed_chain(const ParamPoint& p, int draws) {
    ChainSet cs;
    Chain c;
    c.draws.assign(static_cast<std::size_t>(draws), p);
    cs.chains.push_back(c);
    return cs;
}

}  // namespace

TEST(DrawLatentU, GammaConditionalMean) {
    const auto xs = sample_u(Family::PG, 0, 1.0, 1.0, 200000, 1);
    double se = 0.0;
    const double mean = oracle::mean_and_se(xs, se);
    EXPECT_NEAR(mean, 0.5, 3.0 * se);
}

TEST(DrawLatentU, InverseGaussianConditionalMean) {
    const auto xs = sample_u(Family::PIG, 0, 1.0, 1.0, 200000, 2);
    double se = 0.0;
    const double mean = oracle::mean_and_se(xs, se);
    EXPECT_NEAR(mean, std::sqrt(1.0 / 3.0), 3.0 * se);
}

TEST(DrawLatentU, ConditionalMeanGrowsWithCount) {
    double previous = 0.0;
    for (Count y : {10, 100, 10000}) {
        const double m = std::exp(gig_log_moment({y - 0.5, 3.0, 1.0}, 1));
        EXPECT_GT(m, previous);
        previous = m;
        const auto xs = sample_u(Family::PIG, y, 1.0, 1.0, 20000, static_cast<std::uint64_t>(y));
        double se = 0.0;
        const double mean = oracle::mean_and_se(xs, se);
        EXPECT_NEAR(mean, m, 4.0 * se) << "y=" << y;
    }
}

TEST(DrawLatentU, KolmogorovSmirnovAgainstQuadrature) {
    struct Case {
        Family f;
        Count y;
        double mu, disp;
    };
    for (const Case& c : {Case{Family::PG, 3, 2.0, 0.965}, Case{Family::PG, 0, 5.0, 0.5},
                          Case{Family::PIG, 7, 1.5, 0.377}, Case{Family::PIG, 0, 10.0, 2.0}}) {
        const auto xs = sample_u(c.f, c.y, c.mu, c.disp, 100000, 99);
        const double p = oracle::ks_pvalue_against_density(xs, conditional_log_density(c.f, c.y, c.mu, c.disp));
        EXPECT_GT(p, 0.01) << to_string(c.f) << " y=" << c.y;
    }
}

TEST(DrawLatentU, LognormalUnsupported) {
    Rng rng(1);
    EXPECT_THROW(draw_latent_u(Family::PLN, 1, 1.0, 1.0, rng), DomainError);
}

TEST(ConditionalDispersion, UnitEffects) {
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(100);
    Rng rng(3);
    std::vector<double> z(20000), s(20000);
    for (auto& v : z) v = draw_conditional_dispersion(Family::PIG, ones, 1e-3, rng);
    for (auto& v : s) v = draw_conditional_dispersion(Family::PLN, ones, 1e-3, rng);
    double se = 0.0;
    const double zbar = oracle::mean_and_se(z, se);
    EXPECT_NEAR(zbar, 50001.0, 3.0 * se);
    const double sbar = oracle::mean_and_se(s, se);
    EXPECT_NEAR(sbar, 0.001 / 49.001, 3.0 * se);
}

TEST(ConditionalDispersion, RecoversInverseGaussianShape) {
    Rng rng(4);
    Eigen::VectorXd u(100000);
    for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = ig_sample({1.0, 2.0}, rng);
    const double z = draw_conditional_dispersion(Family::PIG, u, 1e-3, rng);
    EXPECT_NEAR(z, 2.0, 0.1);
}

TEST(ConditionalDispersion, GammaFamilyUnsupported) {
    Rng rng(1);
    EXPECT_THROW(draw_conditional_dispersion(Family::PG, Eigen::VectorXd::Ones(3), 1e-3, rng), DomainError);
    EXPECT_THROW(draw_conditional_dispersion(Family::PIG, Eigen::VectorXd::Zero(3), 1e-3, rng), DomainError);
}

TEST(EvenlySpaced, EndpointsAndCount) {
    const auto idx = evenly_spaced(4000, 500);
    ASSERT_EQ(idx.size(), 500u);
    EXPECT_EQ(idx.front(), 0u);
    EXPECT_EQ(idx.back(), 3999u);
    for (std::size_t k = 1; k < idx.size(); ++k) EXPECT_GT(idx[k], idx[k - 1]);
    EXPECT_EQ(evenly_spaced(10, 0).size(), 10u);
    EXPECT_EQ(evenly_spaced(10, 20).size(), 10u);
}

TEST(PredictiveDraws, PoissonLimitMeans) {
    const std::vector<double> y{0, 3, 1, 7, 2, 4, 0, 9, 5};
    ODDataset d = intercept_dataset(3, y);
    d.X.conservativeResize(9, 2);
    for (int i = 0; i < 9; ++i) d.X(i, 1) = 0.2 * i;
    const ParamPoint p{(Eigen::VectorXd(2) << 0.5, 0.1).finished(), 1e8};
    const auto e = predictive_draws(fixed_chain(p, 20000), d, Family::PG, {.draws = 0, .seed = 5});
    for (int i = 0; i < 9; ++i) {
        const double mu = std::exp(0.5 + 0.02 * i);
        const double mean = e.y_pred.col(i).mean();
        EXPECT_NEAR(mean, mu, 4.0 * std::sqrt(mu / 20000.0)) << "cell " << i;
    }
}

TEST(PredictiveDraws, PooledVarianceFollowsMixture) {
    // Observed cells at the marginal quantiles make the pooled predictive
    // distribution the marginal one: variance mu + mu^2 / zeta for u ~ IG(1, zeta).
    const double mu = 3.0, zeta = 1.0;
    const auto ys = quantile_counts(Family::PIG, mu, zeta, 400);
    const ODDataset d = intercept_dataset(20, ys);
    const ParamPoint p{Eigen::VectorXd::Constant(1, std::log(mu)), zeta};
    const auto e = predictive_draws(fixed_chain(p, 2500), d, Family::PIG, {.draws = 0, .seed = 6});
    const double mean = e.y_pred.mean();
    const double var = (e.y_pred.array() - mean).square().sum() / (e.y_pred.size() - 1.0);
    EXPECT_NEAR(mean, mu, 0.05 * mu);
    EXPECT_NEAR(var, mu + mu * mu / zeta, 0.05 * (mu + mu * mu / zeta));
}

TEST(PredictiveDraws, DeterministicAndStreamingConsistent) {
    const ODDataset d = intercept_dataset(2, {1, 0, 4, 2});
    const ParamPoint p{Eigen::VectorXd::Constant(1, 0.4), 0.8};
    const auto a = predictive_draws(fixed_chain(p, 50), d, Family::PIG, {.draws = 0, .seed = 11});
    const auto b = predictive_draws(fixed_chain(p, 50), d, Family::PIG, {.draws = 0, .seed = 11});
    EXPECT_EQ(a.u, b.u);
    EXPECT_EQ(a.y_pred, b.y_pred);
    for_each_predictive_row(a.params, d, Family::PIG, 11,
                            [&](std::size_t m, const ParamPoint&, const Eigen::VectorXd& u, const Eigen::VectorXd& y) {
                                EXPECT_EQ(u, a.u.row(static_cast<Eigen::Index>(m)).transpose());
                                EXPECT_EQ(y, a.y_pred.row(static_cast<Eigen::Index>(m)).transpose());
                            });
    EXPECT_TRUE((a.u.array() > 0.0).all());
    EXPECT_TRUE((a.y_pred.array() >= 0.0).all());
}

TEST(PredictiveDraws, LawOfTotalExpectation) {
    const ODDataset d = intercept_dataset(2, {0, 3, 12, 1});
    const ParamPoint p{Eigen::VectorXd::Constant(1, 1.0), 0.7};
    const auto e = predictive_draws(fixed_chain(p, 40000), d, Family::PG, {.draws = 0, .seed = 12});
    const double mu = std::exp(1.0);
    for (int i = 0; i < 4; ++i) {
        const Eigen::ArrayXd diff = e.y_pred.col(i).array() - mu * e.u.col(i).array();
        const double mean = diff.mean();
        const double sd = std::sqrt((diff - mean).square().sum() / (diff.size() - 1.0));
        EXPECT_NEAR(mean, 0.0, 4.0 * sd / std::sqrt(static_cast<double>(diff.size()))) << "cell " << i;
    }
}

TEST(PredictiveDraws, LognormalUnsupported) {
    const ODDataset d = intercept_dataset(1, {1});
    EXPECT_THROW(predictive_draws(fixed_chain({Eigen::VectorXd::Zero(1), 1.0}, 2), d, Family::PLN, {}), DomainError);
}

TEST(Ppc, ReplicatesAlwaysLargerGiveOne) {
    const ODDataset d = intercept_dataset(2, {0, 0, 0, 0});
    PredictiveEnsemble e;
    e.family = Family::PG;
    e.params.assign(10, {Eigen::VectorXd::Zero(1), 1.0});
    e.u = Eigen::MatrixXd::Ones(10, 4);
    e.y_pred = Eigen::MatrixXd::Constant(10, 4, 50.0);
    const auto r = ppc_pvalues(e, d);
    for (double p : r.p_values) EXPECT_EQ(p, 1.0);
}

TEST(Ppc, InvariantUnderMonotoneTransform) {
    const ODDataset d = intercept_dataset(3, {0, 1, 4, 2, 0, 7, 3, 1, 2});
    const ParamPoint p{Eigen::VectorXd::Constant(1, 0.8), 1.2};
    const auto e = predictive_draws(fixed_chain(p, 300), d, Family::PG, {.draws = 0, .seed = 3});
    const auto r = ppc_pvalues(e, d);
    for (int s = 0; s < 3; ++s) {
        double count = 0;
        for (Eigen::Index m = 0; m < r.observed.rows(); ++m) {
            auto f = [](double x) { return std::atan(x) + x * x * x; };  // strictly increasing
            if (f(r.replicated(m, s)) >= f(r.observed(m, s))) ++count;
        }
        EXPECT_DOUBLE_EQ(count / r.observed.rows(), r.p_values[static_cast<std::size_t>(s)]);
    }
}

TEST(Ppc, StatisticsDefinition) {
    const Eigen::VectorXd y = (Eigen::VectorXd(3) << 0, 2, 5).finished();
    const Eigen::VectorXd m = (Eigen::VectorXd(3) << 0.5, 2.0, 4.0).finished();
    const auto t = ppc_statistics(y, m);
    EXPECT_NEAR(t[0], 0.5, 1e-14);
    EXPECT_NEAR(t[1], 0.25 + 0.0 + 1.0, 1e-14);
    const double dev = -2.0 * (oracle::log_poisson(0, 0.5) + oracle::log_poisson(2, 2.0) + oracle::log_poisson(5, 4.0));
    EXPECT_NEAR(t[2], dev, 1e-12);
}

TEST(Aggregate, SubsetSumsAreAdditive) {
    const ODDataset d = intercept_dataset(3, {0, 1, 4, 2, 0, 7, 3, 1, 2});
    const ParamPoint p{Eigen::VectorXd::Constant(1, 0.8), 1.2};
    const auto e = predictive_draws(fixed_chain(p, 200), d, Family::PIG, {.draws = 0, .seed = 4});
    const auto a = aggregate_check(e, d, {0, 1, 2, 3});
    const auto b = aggregate_check(e, d, {4, 5, 6, 7, 8});
    const auto all = aggregate_check(e, d, {0, 1, 2, 3, 4, 5, 6, 7, 8});
    for (std::size_t m = 0; m < all.sums.size(); ++m) EXPECT_EQ(a.sums[m] + b.sums[m], all.sums[m]);
    EXPECT_EQ(a.observed + b.observed, all.observed);
    EXPECT_THROW(aggregate_check(e, d, {}), ValidationError);
}

TEST(Aggregate, StructuralZeroCell) {
    const ODDataset d = intercept_dataset(1, {0});
    const ParamPoint p{Eigen::VectorXd::Constant(1, -40.0), 1e8};
    const auto e = predictive_draws(fixed_chain(p, 100), d, Family::PG, {.draws = 0, .seed = 4});
    const auto r = aggregate_check(e, d, {0});
    for (double s : r.sums) EXPECT_EQ(s, 0.0);
    EXPECT_EQ(r.p_value, 1.0);
    EXPECT_EQ(r.density.grid.size(), 512u);
}

TEST(Aggregate, PoissonChainsCalibrated) {
    // Data drawn from the predictive law itself: the total should sit inside
    // its predictive distribution.
    std::vector<std::size_t> cells(64);
    for (std::size_t i = 0; i < 64; ++i) cells[i] = i;
    const ParamPoint p{Eigen::VectorXd::Constant(1, 1.5), 1e8};
    int extreme = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(100 + seed);
        std::vector<double> y(64);
        for (auto& v : y) v = static_cast<double>(poisson_draw(std::exp(1.5), rng));
        const ODDataset d = intercept_dataset(8, y);
        const auto e = predictive_draws(fixed_chain(p, 500), d, Family::PG, {.draws = 0, .seed = seed});
        const auto r = aggregate_check(e, d, cells);
        if (r.p_value < 0.05) ++extreme;
        EXPECT_LE(r.p_value, 1.0);
        EXPECT_NEAR(r.p_value, std::min(1.0, 2.0 * std::min(r.upper_tail, r.lower_tail)), 1e-15);
        const auto one = aggregate_check(e, d, cells, true);
        EXPECT_EQ(one.p_value, one.upper_tail);
    }
    EXPECT_LE(extreme, 4);
}

TEST(KernelDensity, IntegratesToOne) {
    Rng rng(2);
    std::vector<double> xs(2000);
    for (double& x : xs) x = 3.0 + 2.0 * standard_normal(rng);
    const auto k = kernel_density(xs);
    double area = 0.0;
    for (std::size_t g = 1; g < k.grid.size(); ++g) {
        area += 0.5 * (k.density[g] + k.density[g - 1]) * (k.grid[g] - k.grid[g - 1]);
    }
    EXPECT_NEAR(area, 1.0, 2e-3);
    EXPECT_GT(k.bandwidth, 0.0);
}

TEST(Criteria, CollapsedChainsHaveZeroComplexity) {
    const ODDataset d = intercept_dataset(2, {1, 0, 3, 2});
    const ModelSpec spec = make_spec(Family::PG, d);
    const ParamPoint p{Eigen::VectorXd::Constant(1, 0.3), 1.7};
    const auto r = criteria(fixed_chain(p, 10), d, spec);
    EXPECT_NEAR(r.pd_marginal, 0.0, 1e-10);
    EXPECT_NEAR(r.dic_marginal, r.deviance_at_mean, 1e-10);
    EXPECT_NEAR(r.aic - 2.0 * r.k, r.dic_marginal, 1e-10);
    EXPECT_EQ(r.k, 2);
}

TEST(Criteria, InterceptOnlyDevianceByHand) {
    const std::vector<double> y{1, 0, 3, 2};
    const ODDataset d = intercept_dataset(2, y);
    const ModelSpec spec = make_spec(Family::PG, d);
    ChainSet cs;
    Chain c;
    c.draws = {{Eigen::VectorXd::Constant(1, 0.2), 1.0}, {Eigen::VectorXd::Constant(1, 0.6), 3.0}};
    cs.chains.push_back(c);
    auto dev = [&](double b, double theta) {
        const double mu = std::exp(b);
        double ll = 0.0;
        for (double v : y) {
            ll += std::lgamma(v + theta) - std::lgamma(theta) - std::lgamma(v + 1.0) +
                  theta * std::log(theta / (mu + theta)) + v * std::log(mu / (mu + theta));
        }
        return -2.0 * ll;
    };
    const double dbar = 0.5 * (dev(0.2, 1.0) + dev(0.6, 3.0));
    const double dhat = dev(0.4, 2.0);
    const auto r = criteria(cs, d, spec);
    EXPECT_NEAR(r.mean_deviance, dbar, 1e-10);
    EXPECT_NEAR(r.deviance_at_mean, dhat, 1e-10);
    EXPECT_NEAR(r.dic_marginal, 2.0 * dbar - dhat, 1e-10);
    EXPECT_NEAR(r.aic, dbar + 4.0, 1e-10);
    EXPECT_NEAR(r.bic, dbar + 2.0 * std::log(4.0), 1e-10);
}

TEST(Criteria, StreamingHierarchicalMatchesBatch) {
    const ODDataset d = intercept_dataset(3, {0, 1, 4, 2, 0, 7, 3, 1, 2});
    const ModelSpec spec = make_spec(Family::PIG, d);
    ChainSet cs;
    Chain c;
    Rng rng(5);
    for (int t = 0; t < 1200; ++t) {
        c.draws.push_back({Eigen::VectorXd::Constant(1, 0.7 + 0.1 * standard_normal(rng)), 1.0 + 0.2 * uniform_open(rng)});
    }
    cs.chains.push_back(c);
    const auto e = predictive_draws(cs, d, Family::PIG, {.draws = kHierarchicalDicDraws, .seed = 21});
    const auto batch = criteria(cs, d, spec, &e);
    const auto stream = criteria_streaming(cs, d, spec, 21);
    ASSERT_TRUE(batch.dic_hierarchical && stream.dic_hierarchical);
    EXPECT_NEAR(*batch.dic_hierarchical, *stream.dic_hierarchical, 1e-9);
    EXPECT_NEAR(*batch.pd_hierarchical, *stream.pd_hierarchical, 1e-9);

    // Direct batch evaluation from the ensemble matrices.
    double dsum = 0.0;
    for (Eigen::Index m = 0; m < e.u.rows(); ++m) {
        dsum += conditional_poisson_deviance(d, e.params[static_cast<std::size_t>(m)].beta, e.u.row(m).transpose());
    }
    Eigen::VectorXd beta_bar = Eigen::VectorXd::Zero(1);
    for (const auto& p : e.params) beta_bar += p.beta;
    beta_bar /= static_cast<double>(e.rows());
    const double dbar = dsum / static_cast<double>(e.rows());
    const double dhat = conditional_poisson_deviance(d, beta_bar, e.u.colwise().mean().transpose());
    EXPECT_NEAR(*batch.dic_hierarchical, 2.0 * dbar - dhat, 1e-9);
}

TEST(Criteria, LognormalHierarchicalUnsupported) {
    const ODDataset d = intercept_dataset(1, {2});
    const ModelSpec spec = make_spec(Family::PLN, d);
    EXPECT_THROW(criteria_streaming(fixed_chain({Eigen::VectorXd::Zero(1), 1.0}, 3), d, spec, 1), DomainError);
    PredictiveEnsemble e;
    EXPECT_THROW(criteria(fixed_chain({Eigen::VectorXd::Zero(1), 1.0}, 3), d, spec, &e), DomainError);
}
