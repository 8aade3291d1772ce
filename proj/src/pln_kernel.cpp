#include "pln_kernel.hpp"

#include <cmath>
#include <vector>

namespace odmix::detail {

__attribute__((target_clones("avx2,fma", "default")))
PlnNodeSums pln_node_sums(const double* __restrict nodes, const double* __restrict log_weight_plus_square,
                          std::size_t n, double mode, double scale, double y, double log_mu, double mu,
                          double prior_mean, double sigma2) {
    thread_local std::vector<double> terms_buf, effects_buf;
    terms_buf.resize(n);
    effects_buf.resize(n);
    double* __restrict terms = terms_buf.data();
    double* __restrict effects = effects_buf.data();
    const double inv_two_sigma2 = 0.5 / sigma2;
    for (std::size_t k = 0; k < n; ++k) {
        const double e = mode + scale * nodes[k];
        const double centred = e - prior_mean;
        effects[k] = std::exp(e);
        terms[k] = log_weight_plus_square[k] + y * (log_mu + e) - mu * effects[k] - centred * centred * inv_two_sigma2;
    }
    double top = terms[0];
    for (std::size_t k = 1; k < n; ++k) top = terms[k] > top ? terms[k] : top;
    double mass = 0.0, first = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double w = std::exp(terms[k] - top);
        mass += w;
        first += w * effects[k];
    }
    return {top, mass, first};
}

}  // namespace odmix::detail
