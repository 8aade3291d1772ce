#pragma once

// Test-only reference computations. Nothing here calls into the library's
// Bessel, pmf or sampler code paths: integrals go through Boost's
// double-exponential quadrature and Boost's Bessel implementation.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/sinh_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/bessel.hpp>

namespace oracle {

/// e^z K_nu(z) from the integral representation int_0^inf e^{-z cosh t} cosh(nu t) dt.
inline double scaled_bessel_k_integral(double nu, double z) {
    boost::math::quadrature::exp_sinh<double> integrator;
    auto f = [&](double t) {
        const double arg = -z * (std::cosh(t) - 1.0) + nu * t;
        if (arg < -745.0) return 0.0;
        return 0.5 * (std::exp(arg) + std::exp(-z * (std::cosh(t) - 1.0) - nu * t));
    };
    return integrator.integrate(f, 1e-15);
}

/// ln of int_{-inf}^{inf} exp(log_f(s)) ds, with the integrand re-centred on
/// `centre` where log_f is close to its maximum and stretched by `scale`,
/// roughly the width of the peak.
inline double log_integral_over_line(const std::function<double(double)>& log_f, double centre, double scale = 1.0) {
    const double peak = log_f(centre);
    boost::math::quadrature::sinh_sinh<double> integrator;
    auto g = [&](double t) {
        const double v = log_f(centre + scale * t) - peak;
        return (std::isnan(v) || v < -745.0) ? 0.0 : std::exp(v);
    };
    return peak + std::log(scale * integrator.integrate(g, 1e-15));
}

inline double log_poisson(double y, double mean) {
    return y * std::log(mean) - mean - std::lgamma(y + 1.0);
}

/// Finds a maximizer of a unimodal function on the real line by golden search
/// over a wide bracket.
inline double argmax_unimodal(const std::function<double(double)>& f, double lo, double hi) {
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - g * (b - a), d = a + g * (b - a);
    for (int i = 0; i < 300 && b - a > 1e-12; ++i) {
        if (f(c) > f(d)) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    return 0.5 * (a + b);
}

/// ln int Poisson(y; mu u) IG(u; 1, zeta) du, integrated over s = ln u.
inline double pig_mixture_log_pmf(double y, double mu, double zeta) {
    auto log_f = [=](double s) {
        const double u = std::exp(s);
        const double log_ig = 0.5 * (std::log(zeta) - std::log(2.0 * std::numbers::pi) - 3.0 * s) -
                              zeta * (u - 1.0) * (u - 1.0) / (2.0 * u);
        return log_poisson(y, mu * u) + log_ig + s;
    };
    const double centre = argmax_unimodal(log_f, -40.0, 20.0);
    return log_integral_over_line(log_f, centre);
}

/// ln int Poisson(y; mu u) Gamma(u; shape, rate) du, integrated over s = ln u.
inline double poisson_gamma_log_pmf(double y, double mu, double shape, double rate) {
    auto log_f = [=](double s) {
        const double u = std::exp(s);
        const double log_gamma = shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * s -
                                 rate * u;
        return log_poisson(y, mu * u) + log_gamma + s;
    };
    const double centre = argmax_unimodal(log_f, -40.0, 20.0);
    return log_integral_over_line(log_f, centre);
}

/// ln int Poisson(y; mu e^s) N(s; -sigma2/2, sigma2) ds.
inline double pln_mixture_log_pmf(double y, double mu, double sigma2) {
    auto log_f = [=](double s) {
        const double d = s + 0.5 * sigma2;
        return log_poisson(y, mu * std::exp(s)) - d * d / (2.0 * sigma2) -
               0.5 * std::log(2.0 * std::numbers::pi * sigma2);
    };
    const double centre = argmax_unimodal(log_f, -40.0, 20.0);
    return log_integral_over_line(log_f, centre, std::min(1.0, std::sqrt(sigma2)));
}

/// Integral of a density over (0, inf) given its log.
inline double integrate_density(const std::function<double(double)>& log_pdf) {
    boost::math::quadrature::exp_sinh<double> integrator;
    auto f = [&](double x) {
        if (!(x > 0.0)) return 0.0;
        const double v = log_pdf(x);
        return v < -745.0 ? 0.0 : std::exp(v);
    };
    return integrator.integrate(f, 1e-14);
}

/// Mean of a positive density by quadrature.
inline double density_mean(const std::function<double(double)>& log_pdf) {
    boost::math::quadrature::exp_sinh<double> integrator;
    auto f = [&](double x) {
        if (!(x > 0.0)) return 0.0;
        const double v = log_pdf(x);
        return v < -745.0 ? 0.0 : x * std::exp(v);
    };
    return integrator.integrate(f, 1e-14);
}

/// Asymptotic Kolmogorov p-value for statistic d with effective size n.
inline double kolmogorov_pvalue(double d, double n) {
    const double sn = std::sqrt(n);
    const double lambda = (sn + 0.12 + 0.11 / sn) * d;
    if (lambda < 0.2) return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 200; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 == 1 ? 2.0 : -2.0) * term;
        if (term < 1e-16) break;
    }
    return std::clamp(sum, 0.0, 1.0);
}

/// One-sample KS p-value against the CDF obtained by integrating the density
/// between consecutive order statistics.
inline double ks_pvalue_against_density(std::vector<double> samples,
                                        const std::function<double(double)>& log_pdf) {
    std::sort(samples.begin(), samples.end());
    auto pdf = [&](double x) { return x > 0.0 ? std::exp(log_pdf(x)) : 0.0; };
    boost::math::quadrature::tanh_sinh<double> head;
    double cdf = head.integrate(pdf, 0.0, samples.front(), 1e-12);
    const double n = static_cast<double>(samples.size());
    double d = std::max(std::abs(cdf - 1.0 / n), std::abs(cdf));
    for (std::size_t i = 1; i < samples.size(); ++i) {
        if (samples[i] > samples[i - 1]) {
            cdf += boost::math::quadrature::gauss<double, 15>::integrate(pdf, samples[i - 1], samples[i]);
        }
        const double lo = static_cast<double>(i) / n;
        const double hi = static_cast<double>(i + 1) / n;
        d = std::max({d, std::abs(cdf - lo), std::abs(cdf - hi)});
    }
    return kolmogorov_pvalue(d, n);
}

/// Standard error of a sample mean.
inline double mean_and_se(const std::vector<double>& xs, double& se) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    se = std::sqrt(ss / (xs.size() - 1.0) / xs.size());
    return mean;
}

}  // namespace oracle
