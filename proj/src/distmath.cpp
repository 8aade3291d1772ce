#include "odmix/distmath.hpp"

#include "pln_kernel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include <boost/math/special_functions/erf.hpp>

#include "odmix/errors.hpp"

namespace odmix {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kLogPi = 1.1447298858494002;  // ln(pi)

bool finite_positive(double v) { return std::isfinite(v) && v > 0.0; }

void require_positive_argument(double z, const char* who) {
    if (!finite_positive(z)) {
        throw DomainError(std::string(who) + ": argument must be positive and finite, got " +
                          std::to_string(z));
    }
}

// Accumulates the logarithm of a long product of factors >= 1 with few calls
// to std::log.
class LogProduct {
public:
    void multiply(double factor) {
        if (factor > 1e20) {
            sum_ += std::log(factor);
            return;
        }
        product_ *= factor;
        if (product_ > 1e250) {
            sum_ += std::log(product_);
            product_ = 1.0;
        }
    }
    double value() const { return sum_ + std::log(product_); }

private:
    double sum_ = 0.0;
    double product_ = 1.0;
};

// Walks K_{nu+1}/K_nu upward from a base order. On entry `ratio` holds
// K_{base+1}/K_base; returns ln(K_{base+steps} / K_base) and leaves `ratio`
// at K_{base+steps+1}/K_{base+steps}.
double upward_recurrence(double base, long steps, double z, double& ratio) {
    LogProduct log_growth;
    for (long i = 1; i <= steps; ++i) {
        log_growth.multiply(ratio);
        ratio = 1.0 / ratio + 2.0 * (base + static_cast<double>(i)) / z;
    }
    return log_growth.value();
}

// 1/Gamma(1+x) = sum_k c[k] x^k near zero (Abramowitz & Stegun 6.1.34,
// shifted by one power).
constexpr std::array<double, 26> kReciprocalGamma = {
    1.0,
    0.5772156649015329,
    -0.6558780715202538,
    -0.0420026350340952,
    0.1665386113822915,
    -0.0421977345555443,
    -0.0096219715278770,
    0.0072189432466630,
    -0.0011651675918591,
    -0.0002152416741149,
    0.0001280502823882,
    -0.0000201348547807,
    -0.0000012504934821,
    0.0000011330272320,
    -0.0000002056338417,
    0.0000000061160950,
    0.0000000050020075,
    -0.0000000011812746,
    0.0000000001043427,
    0.0000000000077823,
    -0.0000000000036968,
    0.0000000000005100,
    -0.0000000000000206,
    -0.0000000000000054,
    0.0000000000000014,
    0.0000000000000001,
};

// Temme's gamma1/gamma2 for |mu| <= 1/2, plus 1/Gamma(1 +- mu).
struct TemmeGammas {
    double gam1, gam2, gampl, gammi;
};

TemmeGammas temme_gammas(double mu) {
    double even = 0.0;
    double odd = 0.0;
    double power = 1.0;
    const double mu2 = mu * mu;
    for (std::size_t k = 0; k < kReciprocalGamma.size(); k += 2) {
        even += kReciprocalGamma[k] * power;
        if (k + 1 < kReciprocalGamma.size()) odd += kReciprocalGamma[k + 1] * power;
        power *= mu2;
    }
    // 1/Gamma(1+mu) = even + mu * odd, 1/Gamma(1-mu) = even - mu * odd.
    return {-odd, even, even + mu * odd, even - mu * odd};
}

// ln(K_mu(z) e^z) and K_{mu+1}/K_mu for |mu| <= 1/2.
ScaledBessel temme_base(double mu, double z) {
    constexpr double eps = 1e-16;
    constexpr int max_iter = 100000;
    const double mu2 = mu * mu;
    if (z < 2.0) {
        const double half_z = 0.5 * z;
        const double pimu = kPi * mu;
        const double fact = std::abs(pimu) < eps ? 1.0 : pimu / std::sin(pimu);
        double d = -std::log(half_z);
        double e = mu * d;
        const double fact2 = std::abs(e) < eps ? 1.0 : std::sinh(e) / e;
        const TemmeGammas g = temme_gammas(mu);
        double ff = fact * (g.gam1 * std::cosh(e) + g.gam2 * fact2 * d);
        double sum = ff;
        e = std::exp(e);
        double p = 0.5 * e / g.gampl;
        double q = 0.5 / (e * g.gammi);
        double c = 1.0;
        d = half_z * half_z;
        double sum1 = p;
        for (int i = 1; i <= max_iter; ++i) {
            const double di = i;
            ff = (di * ff + p + q) / (di * di - mu2);
            c *= d / di;
            p /= di - mu;
            q /= di + mu;
            const double del = c * ff;
            sum += del;
            sum1 += c * (p - di * ff);
            if (std::abs(del) < std::abs(sum) * eps) break;
        }
        const double k_mu = sum;
        const double k_mu1 = sum1 * 2.0 / z;
        return {std::log(k_mu) + z, k_mu1 / k_mu};
    }
    // Steed's algorithm for the continued fraction CF2.
    double b = 2.0 * (1.0 + z);
    double d = 1.0 / b;
    double h = d;
    double delh = d;
    double q1 = 0.0;
    double q2 = 1.0;
    const double a1 = 0.25 - mu2;
    double q = a1;
    double c = a1;
    double a = -a1;
    double s = 1.0 + q * delh;
    for (int i = 1; i <= max_iter; ++i) {
        const double di = i;
        a -= 2.0 * di;
        c = -a * c / (di + 1.0);
        const double qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        const double dels = q * delh;
        s += dels;
        if (std::abs(dels / s) < eps) break;
    }
    h *= a1;
    return {0.5 * std::log(kPi / (2.0 * z)) - std::log(s), (mu + z + 0.5 - h) / z};
}

ScaledBessel generic_scaled(double nu, double z) {
    nu = std::abs(nu);
    const long steps = static_cast<long>(std::floor(nu + 0.5));
    const double mu = nu - static_cast<double>(steps);
    ScaledBessel base = temme_base(mu, z);
    double ratio = base.next_ratio;
    const double growth = upward_recurrence(mu, steps, z, ratio);
    return {base.log_scaled + growth, ratio};
}

bool is_half_integer(double nu) {
    const double twice = 2.0 * nu;
    return std::abs(twice) < 2e9 && twice == std::round(twice) &&
           static_cast<long long>(std::round(twice)) % 2 != 0;
}

double log_bessel_k_any_scaled(double nu, double z) {
    if (is_half_integer(nu)) {
        return log_bessel_k_half_scaled(HalfIntOrder(static_cast<int>(std::lround(2.0 * nu))), z);
    }
    return generic_scaled(nu, z).log_scaled;
}

double log_gamma_ratio(Count y, double theta) {
    // ln Gamma(y + theta) - ln Gamma(theta); direct sum keeps precision when
    // theta dwarfs y.
    if (y < 64) {
        double acc = 0.0;
        for (Count k = 0; k < y; ++k) acc += std::log(theta + static_cast<double>(k));
        return acc;
    }
    return std::lgamma(static_cast<double>(y) + theta) - std::lgamma(theta);
}

void check_count(Count y, const char* who) {
    if (y < 0) throw DomainError(std::string(who) + ": count must be non-negative");
}

void check_mean_dispersion(double mu, double dispersion, const char* who) {
    if (!finite_positive(mu) || !finite_positive(dispersion)) {
        throw DomainError(std::string(who) + ": mean and dispersion must be positive and finite");
    }
}

// -- GIG generators for the standardized density y^{lambda-1} e^{-omega(y+1/y)/2},
//    lambda >= 0 (Hoermann & Leydold's three regimes).

double gig_mode(double lambda, double omega) {
    if (lambda >= 1.0) {
        return (std::sqrt((lambda - 1.0) * (lambda - 1.0) + omega * omega) + (lambda - 1.0)) /
               omega;
    }
    return omega / (std::sqrt((1.0 - lambda) * (1.0 - lambda) + omega * omega) + (1.0 - lambda));
}

// Ratio of uniforms with the mode shifted to the origin.
double rou_shift(double lambda, double omega, Rng& rng) {
    const double t = 0.5 * (lambda - 1.0);
    const double s = 0.25 * omega;
    const double xm = gig_mode(lambda, omega);
    const double nc = t * std::log(xm) - s * (xm + 1.0 / xm);

    // Roots of the cubic bounding the shifted region.
    const double a = -(2.0 * (lambda + 1.0) / omega + xm);
    const double b = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
    const double c = xm;
    const double p = b - a * a / 3.0;
    const double q = (2.0 * a * a * a) / 27.0 - (a * b) / 3.0 + c;
    const double fi = std::acos(std::clamp(-q / (2.0 * std::sqrt(-(p * p * p) / 27.0)), -1.0, 1.0));
    const double fak = 2.0 * std::sqrt(-p / 3.0);
    const double y1 = fak * std::cos(fi / 3.0) - a / 3.0;
    const double y2 = fak * std::cos(fi / 3.0 + 4.0 / 3.0 * kPi) - a / 3.0;

    const double uplus = (y1 - xm) * std::exp(t * std::log(y1) - s * (y1 + 1.0 / y1) - nc);
    const double uminus = (y2 - xm) * std::exp(t * std::log(y2) - s * (y2 + 1.0 / y2) - nc);

    for (;;) {
        const double u = uminus + (uplus - uminus) * uniform_open(rng);
        const double v = uniform_open(rng);
        const double x = u / v + xm;
        if (x <= 0.0) continue;
        if (std::log(v) <= t * std::log(x) - s * (x + 1.0 / x) - nc) return x;
    }
}

double rou_noshift(double lambda, double omega, Rng& rng) {
    const double t = 0.5 * (lambda - 1.0);
    const double s = 0.25 * omega;
    const double xm = gig_mode(lambda, omega);
    const double nc = t * std::log(xm) - s * (xm + 1.0 / xm);
    const double ym = ((lambda + 1.0) + std::sqrt((lambda + 1.0) * (lambda + 1.0) + omega * omega)) /
                      omega;
    const double um = std::exp(0.5 * (lambda + 1.0) * std::log(ym) - s * (ym + 1.0 / ym) - nc);
    for (;;) {
        const double u = um * uniform_open(rng);
        const double v = uniform_open(rng);
        const double x = u / v;
        if (std::log(v) <= t * std::log(x) - s * (x + 1.0 / x) - nc) return x;
    }
}

// Constant hat on the log-concave part; 0 <= lambda < 1, omega <= 1.
double constant_hat(double lambda, double omega, Rng& rng) {
    const double xm = gig_mode(lambda, omega);
    const double x0 = omega / (1.0 - lambda);
    const double k0 = std::exp((lambda - 1.0) * std::log(xm) - 0.5 * omega * (xm + 1.0 / xm));
    std::array<double, 3> area{};
    area[0] = k0 * x0;
    double k1 = 0.0;
    double k2 = 0.0;
    if (x0 >= 2.0 / omega) {
        k2 = std::pow(x0, lambda - 1.0);
        area[2] = k2 * 2.0 * std::exp(-omega * x0 / 2.0) / omega;
    } else {
        k1 = std::exp(-omega);
        area[1] = lambda == 0.0
                      ? k1 * std::log(2.0 / (omega * omega))
                      : k1 / lambda * (std::pow(2.0 / omega, lambda) - std::pow(x0, lambda));
        k2 = std::pow(2.0 / omega, lambda - 1.0);
        area[2] = k2 * 2.0 * std::exp(-1.0) / omega;
    }
    const double total = area[0] + area[1] + area[2];

    for (;;) {
        double v = total * uniform_open(rng);
        double x = 0.0;
        double hx = 0.0;
        if (v <= area[0]) {
            x = x0 * v / area[0];
            hx = k0;
        } else if ((v -= area[0]) <= area[1]) {
            if (lambda == 0.0) {
                x = omega * std::exp(std::exp(omega) * v);
                hx = k1 / x;
            } else {
                x = std::pow(std::pow(x0, lambda) + lambda / k1 * v, 1.0 / lambda);
                hx = k1 * std::pow(x, lambda - 1.0);
            }
        } else {
            v -= area[1];
            const double lo = std::max(x0, 2.0 / omega);
            x = -2.0 / omega * std::log(std::exp(-omega / 2.0 * lo) - omega / (2.0 * k2) * v);
            hx = k2 * std::exp(-omega / 2.0 * x);
        }
        const double u = uniform_open(rng) * hx;
        if (std::log(u) <= (lambda - 1.0) * std::log(x) - omega / 2.0 * (x + 1.0 / x)) return x;
    }
}

double standard_gig(double lambda, double omega, Rng& rng) {
    if (lambda > 2.0 || omega > 3.0) return rou_shift(lambda, omega, rng);
    if (lambda >= 1.0 - 2.25 * omega * omega || omega > 0.2) return rou_noshift(lambda, omega, rng);
    return constant_hat(lambda, omega, rng);
}

std::unique_ptr<GaussHermiteRule> compute_gauss_hermite(int n) {
    constexpr double eps = 1e-15;
    constexpr double pim4 = 0.7511255444649425;  // pi^{-1/4}
    auto rule = std::make_unique<GaussHermiteRule>();
    rule->nodes.assign(n, 0.0);
    rule->log_weights.assign(n, 0.0);
    const int m = (n + 1) / 2;
    double z = 0.0;
    for (int i = 0; i < m; ++i) {
        if (i == 0) {
            z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
        } else if (i == 1) {
            z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
        } else if (i == 2) {
            z = 1.86 * z - 0.86 * rule->nodes[0];
        } else if (i == 3) {
            z = 1.91 * z - 0.91 * rule->nodes[1];
        } else {
            z = 2.0 * z - rule->nodes[i - 2];
        }
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p1 = pim4;
            double p2 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / (j + 1.0)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1.0)) * p3;
            }
            pp = std::sqrt(2.0 * n) * p2;
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) <= eps * std::max(1.0, std::abs(z))) break;
        }
        rule->nodes[i] = z;
        rule->nodes[n - 1 - i] = -z;
        const double lw = std::log(2.0) - 2.0 * std::log(std::abs(pp));
        rule->log_weights[i] = lw;
        rule->log_weights[n - 1 - i] = lw;
    }
    rule->log_weight_plus_square.resize(n);
    for (int k = 0; k < n; ++k) {
        rule->log_weight_plus_square[k] = rule->log_weights[k] + rule->nodes[k] * rule->nodes[k];
    }
    return rule;
}

// Mode of h(e) = y e - mu exp(e) - (e + s2/2)^2 / (2 s2), the log of the
// Poisson-lognormal integrand on the scale e = ln u.
double pln_mode(double y, double mu, double sigma2) {
    const double prior_mean = -0.5 * sigma2;
    double lo, hi;
    if (y > 0.0) {
        const double poisson_mode = std::log(y / mu);
        lo = std::min(prior_mean, poisson_mode);
        hi = std::max(prior_mean, poisson_mode);
    } else {
        hi = prior_mean;
        lo = prior_mean - sigma2 * mu * std::exp(prior_mean);
    }
    double e = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        const double mean = mu * std::exp(e);
        const double g = y - mean - (e - prior_mean) / sigma2;
        if (g > 0.0) lo = e; else hi = e;
        double next = e + g / (mean + 1.0 / sigma2);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - e) <= 1e-14 * std::max(1.0, std::abs(e))) return next;
        e = next;
        if (hi - lo <= 1e-15 * std::max(1.0, std::abs(e))) break;
    }
    return e;
}

double log_sum_exp(const std::vector<double>& terms) {
    const double top = *std::max_element(terms.begin(), terms.end());
    if (!std::isfinite(top)) return top;
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - top);
    return top + std::log(acc);
}

}  // namespace

// -- HalfIntOrder / params ----------------------------------------------------------

HalfIntOrder::HalfIntOrder(int twice_order) : twice_(twice_order) {
    if (twice_order % 2 == 0) {
        throw DomainError("HalfIntOrder: twice_order must be odd, got " + std::to_string(twice_order));
    }
}

HalfIntOrder HalfIntOrder::count_minus_half(Count y) {
    if (y < 0 || y > (std::numeric_limits<int>::max() - 1) / 2) {
        throw DomainError("HalfIntOrder: count out of range");
    }
    return HalfIntOrder(static_cast<int>(2 * y - 1));
}

void GigParams::validate() const {
    if (!std::isfinite(lambda) || !finite_positive(psi) || !std::isfinite(chi) || chi < 0.0) {
        throw DomainError("GIG parameters require finite lambda, psi > 0 and chi >= 0");
    }
    if (chi == 0.0 && !(lambda > 0.0)) {
        throw DomainError("GIG with chi = 0 requires lambda > 0");
    }
}

void IgParams::validate() const {
    if (!finite_positive(mu) || !finite_positive(zeta)) {
        throw DomainError("IG parameters require mu > 0 and zeta > 0");
    }
}

// -- Bessel K ------------------------------------------------------------------

double log_bessel_k_half_scaled(HalfIntOrder order, double z) {
    return bessel_k_half_scaled_with_ratio(order, z).log_scaled;
}

ScaledBessel bessel_k_half_scaled_with_ratio(HalfIntOrder order, double z) {
    require_positive_argument(z, "log_bessel_k_half");
    // K_{-nu} = K_nu; start from the closed form K_{1/2}(z) = sqrt(pi/(2z)) e^{-z}.
    const long steps = (std::abs(static_cast<long>(order.twice_order())) - 1) / 2;
    double ratio = 1.0 + 1.0 / z;  // K_{3/2} / K_{1/2}
    const double growth = upward_recurrence(0.5, steps, z, ratio);
    return {0.5 * std::log(kPi / (2.0 * z)) + growth, ratio};
}

double log_bessel_k_half(HalfIntOrder order, double z) {
    return log_bessel_k_half_scaled(order, z) - z;
}

double log_bessel_k_scaled(double nu, double z) {
    require_positive_argument(z, "log_bessel_k");
    if (!std::isfinite(nu)) throw DomainError("log_bessel_k: order must be finite");
    return log_bessel_k_any_scaled(nu, z);
}

double log_bessel_k(double nu, double z) { return log_bessel_k_scaled(nu, z) - z; }

// -- GIG / IG --------------------------------------------------------------------

double gig_logpdf(double x, const GigParams& p) {
    p.validate();
    if (!finite_positive(x)) throw DomainError("gig_logpdf: x must be positive and finite");
    if (p.chi == 0.0) {
        // Gamma(lambda, rate psi/2).
        const double rate = 0.5 * p.psi;
        return p.lambda * std::log(rate) - std::lgamma(p.lambda) + (p.lambda - 1.0) * std::log(x) -
               rate * x;
    }
    const double omega = std::sqrt(p.psi * p.chi);
    const double log_k = log_bessel_k_any_scaled(p.lambda, omega) - omega;
    return 0.5 * p.lambda * std::log(p.psi / p.chi) - std::log(2.0) - log_k +
           (p.lambda - 1.0) * std::log(x) - 0.5 * (p.psi * x + p.chi / x);
}

double gig_log_moment(const GigParams& p, int r) {
    p.validate();
    if (r < 1) throw DomainError("gig_log_moment: order must be >= 1");
    if (p.chi == 0.0) {
        return std::lgamma(p.lambda + r) - std::lgamma(p.lambda) - r * std::log(0.5 * p.psi);
    }
    const double omega = std::sqrt(p.psi * p.chi);
    // The e^{omega} scalings cancel in the Bessel ratio.
    return 0.5 * r * std::log(p.chi / p.psi) + log_bessel_k_any_scaled(p.lambda + r, omega) -
           log_bessel_k_any_scaled(p.lambda, omega);
}

double gig_mean(const GigParams& p) { return std::exp(gig_log_moment(p, 1)); }

double gig_sample(const GigParams& p, Rng& rng) {
    p.validate();
    if (p.chi == 0.0) return gamma_draw(p.lambda, 0.5 * p.psi, rng);
    if (p.lambda == -0.5) {
        return ig_sample({std::sqrt(p.chi / p.psi), p.chi}, rng);
    }
    const double omega = std::sqrt(p.psi * p.chi);
    const double alpha = std::sqrt(p.chi / p.psi);
    const double y = standard_gig(std::abs(p.lambda), omega, rng);
    return p.lambda < 0.0 ? alpha / y : alpha * y;
}

double ig_logpdf(double x, const IgParams& p) {
    p.validate();
    if (!finite_positive(x)) throw DomainError("ig_logpdf: x must be positive and finite");
    const double d = x - p.mu;
    return 0.5 * (std::log(p.zeta) - std::log(2.0 * kPi) - 3.0 * std::log(x)) -
           p.zeta * d * d / (2.0 * p.mu * p.mu * x);
}

double ig_sample(const IgParams& p, Rng& rng) {
    p.validate();
    const double n = standard_normal(rng);
    const double phi = p.mu * n * n / (2.0 * p.zeta);
    // Smaller root of the quadratic, written without cancellation.
    const double x = p.mu / (1.0 + phi + std::sqrt(phi * (phi + 2.0)));
    if (uniform_open(rng) * (p.mu + x) <= p.mu) return x;
    return p.mu * p.mu / x;
}

// -- Count pmfs ------------------------------------------------------------------

double log_factorial(Count y) { return std::lgamma(static_cast<double>(y) + 1.0); }

double poisson_logpmf(Count y, double mean) {
    check_count(y, "poisson_logpmf");
    if (!(mean >= 0.0) || !std::isfinite(mean)) throw DomainError("poisson_logpmf: invalid mean");
    if (mean == 0.0) return y == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
    return static_cast<double>(y) * std::log(mean) - mean - log_factorial(y);
}

LogPmfWithLatentMean nb_logpmf_with_latent_mean(Count y, double mu, double theta) {
    check_count(y, "nb_logpmf");
    check_mean_dispersion(mu, theta, "nb_logpmf");
    const double yd = static_cast<double>(y);
    const double log_pmf = log_gamma_ratio(y, theta) - log_factorial(y) -
                           theta * std::log1p(mu / theta) +
                           yd * (std::log(mu) - std::log(mu + theta));
    return {log_pmf, (yd + theta) / (mu + theta)};
}

double nb_logpmf(Count y, double mu, double theta) {
    return nb_logpmf_with_latent_mean(y, mu, theta).log_pmf;
}

LogPmfWithLatentMean pig_logpmf_with_latent_mean(Count y, double mu, double zeta) {
    check_count(y, "pig_logpmf");
    check_mean_dispersion(mu, zeta, "pig_logpmf");
    const double yd = static_cast<double>(y);
    const double psi = 2.0 * mu + zeta;
    const double omega = std::sqrt(zeta * psi);
    const ScaledBessel k = bessel_k_half_scaled_with_ratio(HalfIntOrder::count_minus_half(y), omega);
    // zeta - omega = -2 mu zeta / (zeta + omega), free of cancellation.
    const double exponent = -2.0 * mu * zeta / (zeta + omega);
    const double log_pmf = 0.5 * std::log(2.0 * zeta / kPi) + exponent + yd * std::log(mu) -
                           log_factorial(y) + k.log_scaled +
                           0.5 * (yd - 0.5) * (std::log(zeta) - std::log(psi));
    // u | y ~ GIG(y - 1/2, psi, zeta): E u = sqrt(zeta/psi) K_{y+1/2} / K_{y-1/2}.
    // For y = 0 the ratio K_{1/2}/K_{-1/2} is one.
    const double ratio = y == 0 ? 1.0 : k.next_ratio;
    return {log_pmf, std::sqrt(zeta / psi) * ratio};
}

double pig_logpmf(Count y, double mu, double zeta) {
    return pig_logpmf_with_latent_mean(y, mu, zeta).log_pmf;
}

// -- Poisson-lognormal ------------------------------------------------------------

const GaussHermiteRule& gauss_hermite_rule(int order) {
    if (order < 2 || order > 512) throw DomainError("gauss_hermite_rule: order must be in [2, 512]");
    static std::mutex mutex;
    static std::map<int, std::unique_ptr<GaussHermiteRule>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[order];
    if (!slot) slot = compute_gauss_hermite(order);
    return *slot;
}

void PlnIntegration::validate() const {
    if (method == Method::quadrature && order < 10) {
        throw DomainError("PLN quadrature order must be at least 10");
    }
    if (method == Method::montecarlo && draws < 1) {
        throw DomainError("PLN Monte Carlo size must be at least 1");
    }
}

LogPmfWithLatentMean pln_logpmf_quadrature_with_latent_mean(Count y, double mu, double sigma2,
                                                            int order) {
    check_count(y, "pln_logpmf");
    check_mean_dispersion(mu, sigma2, "pln_logpmf");
    if (order < 10) throw DomainError("pln_logpmf: quadrature order must be at least 10");
    const GaussHermiteRule& rule = gauss_hermite_rule(order);
    const double yd = static_cast<double>(y);
    const double prior_mean = -0.5 * sigma2;
    const double mode = pln_mode(yd, mu, sigma2);
    const double curvature = mu * std::exp(mode) + 1.0 / sigma2;
    const double scale = std::sqrt(2.0 / curvature);

    const detail::PlnNodeSums sums =
        detail::pln_node_sums(rule.nodes.data(), rule.log_weight_plus_square.data(), rule.nodes.size(), mode, scale, yd,
                              std::log(mu), mu, prior_mean, sigma2);
    const double log_pmf = sums.top + std::log(sums.mass) + std::log(scale) - log_factorial(y) -
                           0.5 * (std::log(2.0 * sigma2) + kLogPi);
    return {log_pmf, sums.first_moment / sums.mass};
}

double pln_logpmf_quadrature(Count y, double mu, double sigma2, int order) {
    return pln_logpmf_quadrature_with_latent_mean(y, mu, sigma2, order).log_pmf;
}

double pln_logpmf_montecarlo(Count y, double mu, double sigma2, int draws, Rng& rng) {
    check_count(y, "pln_logpmf");
    check_mean_dispersion(mu, sigma2, "pln_logpmf");
    if (draws < 1) throw DomainError("pln_logpmf: Monte Carlo size must be at least 1");
    const double sigma = std::sqrt(sigma2);
    const double yd = static_cast<double>(y);
    const double log_mu = std::log(mu);
    std::vector<double> terms(static_cast<std::size_t>(draws));
    for (int l = 0; l < draws; ++l) {
        // One uniform per stratum ((l + U) / L) of the lognormal quantile.
        const double prob = (l + uniform_open(rng)) / draws;
        const double normal = -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * prob);
        const double e = -0.5 * sigma2 + sigma * normal;
        terms[l] = yd * (log_mu + e) - mu * std::exp(e);
    }
    return log_sum_exp(terms) - std::log(static_cast<double>(draws)) - log_factorial(y);
}

double pln_logpmf(Count y, double mu, double sigma2, const PlnIntegration& method) {
    method.validate();
    if (method.method == PlnIntegration::Method::quadrature) {
        return pln_logpmf_quadrature(y, mu, sigma2, method.order);
    }
    Rng rng = make_stream(method.seed, 0);
    return pln_logpmf_montecarlo(y, mu, sigma2, method.draws, rng);
}

}  // namespace odmix
