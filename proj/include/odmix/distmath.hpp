#pragma once

// Special functions, mixture pmfs and variate generators shared by the three
// Poisson mixture families (gamma, lognormal, inverse Gaussian mixing).
//
// Everything that can overflow is evaluated on the log scale. The Bessel
// functions of the third kind are returned as ln K_nu(z); the "scaled"
// variants return ln(K_nu(z) e^z) so callers can cancel the e^{-z} factor
// analytically.

#include <cstdint>
#include <vector>

#include "odmix/random.hpp"

namespace odmix {

using Count = std::int64_t;

/// Half-integer Bessel order nu = twice_order / 2 with twice_order odd.
class HalfIntOrder {
public:
    explicit HalfIntOrder(int twice_order);

    /// The order y - 1/2 used by the Poisson-inverse Gaussian pmf.
    static HalfIntOrder count_minus_half(Count y);

    int twice_order() const noexcept { return twice_; }
    double value() const noexcept { return 0.5 * twice_; }

private:
    int twice_;
};

/// GIG(lambda, psi, chi): density proportional to
/// x^{lambda-1} exp(-(psi x + chi / x) / 2) on x > 0.
struct GigParams {
    double lambda = 0.0;
    double psi = 1.0;
    double chi = 1.0;

    /// Throws DomainError unless psi > 0, chi >= 0 and (chi > 0 or lambda > 0).
    void validate() const;
};

/// Inverse Gaussian with mean mu and shape zeta (variance mu^3 / zeta).
struct IgParams {
    double mu = 1.0;
    double zeta = 1.0;

    void validate() const;
    GigParams as_gig() const noexcept { return {-0.5, zeta / (mu * mu), zeta}; }
};

// -- Bessel K ---------------------------------------------------------------

double log_bessel_k_half(HalfIntOrder order, double z);
double log_bessel_k_half_scaled(HalfIntOrder order, double z);

/// ln K_nu(z) for arbitrary real nu (Temme series / Steed continued fraction
/// at the base order, then upward recurrence on the ratio).
double log_bessel_k(double nu, double z);
double log_bessel_k_scaled(double nu, double z);

/// ln(K_nu(z) e^z) together with the ratio K_{nu+1}(z) / K_nu(z).
struct ScaledBessel {
    double log_scaled = 0.0;
    double next_ratio = 1.0;
};
ScaledBessel bessel_k_half_scaled_with_ratio(HalfIntOrder order, double z);

// -- GIG / IG ---------------------------------------------------------------

double gig_logpdf(double x, const GigParams& p);
double gig_log_moment(const GigParams& p, int r);
double gig_mean(const GigParams& p);
double gig_sample(const GigParams& p, Rng& rng);

double ig_logpdf(double x, const IgParams& p);
/// Michael-Schucany-Haas transformation sampler.
double ig_sample(const IgParams& p, Rng& rng);

// -- Count pmfs ---------------------------------------------------------------

double log_factorial(Count y);
double poisson_logpmf(Count y, double mean);

/// Negative binomial with mean mu and variance mu + mu^2 / theta.
double nb_logpmf(Count y, double mu, double theta);

/// Poisson mixed over IG(1, zeta), Poisson rate mu * u.
double pig_logpmf(Count y, double mu, double zeta);

/// Log pmf plus the conditional mean E[u | y] of the latent effect. The
/// latter gives the score d ln p / d mu = y / mu - E[u | y].
struct LogPmfWithLatentMean {
    double log_pmf = 0.0;
    double latent_mean = 1.0;
};
LogPmfWithLatentMean pig_logpmf_with_latent_mean(Count y, double mu, double zeta);
LogPmfWithLatentMean nb_logpmf_with_latent_mean(Count y, double mu, double theta);

// -- Poisson-lognormal ----------------------------------------------------------

/// Gauss-Hermite rule for weight e^{-x^2}. `log_weight_plus_square` holds
/// ln w_k + x_k^2, the factor needed once the integrand is re-centred.
struct GaussHermiteRule {
    std::vector<double> nodes;
    std::vector<double> log_weights;
    std::vector<double> log_weight_plus_square;
};

/// Cached, thread-safe access; order must be at least 2.
const GaussHermiteRule& gauss_hermite_rule(int order);

/// Adaptive Gauss-Hermite quadrature of the Poisson-LN(-sigma2/2, sigma2)
/// mixture, centred on the mode of the log-scale integrand.
double pln_logpmf_quadrature(Count y, double mu, double sigma2, int order = 64);
LogPmfWithLatentMean pln_logpmf_quadrature_with_latent_mean(Count y, double mu, double sigma2,
                                                            int order = 64);

/// Monte Carlo average of Poisson pmfs over `draws` stratified lognormal
/// effects, combined with log-sum-exp.
double pln_logpmf_montecarlo(Count y, double mu, double sigma2, int draws, Rng& rng);

struct PlnIntegration {
    enum class Method { quadrature, montecarlo };
    Method method = Method::quadrature;
    int order = 64;
    int draws = 2000;
    /// Monte Carlo evaluations reseed from this value on every call so that
    /// repeated evaluations at one point agree (common random numbers).
    std::uint64_t seed = 0x5eed;

    void validate() const;
};

double pln_logpmf(Count y, double mu, double sigma2, const PlnIntegration& method = {});

}  // namespace odmix
