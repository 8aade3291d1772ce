#pragma once

#include <cstddef>

namespace odmix::detail {

struct PlnNodeSums {
    double top = 0.0;           ///< largest log term
    double mass = 0.0;          ///< sum exp(term - top)
    double first_moment = 0.0;  ///< same sum weighted by e^s
};

/// Adaptive Gauss-Hermite sums for the Poisson-lognormal integrand at nodes
/// s_k = mode + scale x_k. Built with vectorized exp; see CMakeLists.txt.
PlnNodeSums pln_node_sums(const double* nodes, const double* log_weight_plus_square, std::size_t n, double mode,
                          double scale, double y, double log_mu, double mu, double prior_mean, double sigma2);

}  // namespace odmix::detail
