#include "odmix/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include "odmix/errors.hpp"

namespace odmix {

void SynthSpec::validate() const {
    if (zones < 2) throw ValidationError("synthetic data needs at least 2 zones");
    if (attribute_pairs < 0) throw ValidationError("attribute pairs must be nonnegative");
    if (!(dispersion > 0.0) || !std::isfinite(dispersion)) throw ValidationError("dispersion must be positive");
    if (beta.size() != coefficients()) {
        throw ValidationError("beta has " + std::to_string(beta.size()) + " entries, the recipe needs " +
                              std::to_string(coefficients()));
    }
    if (!beta.allFinite()) throw ValidationError("beta must be finite");
    if (!(attribute_sd > 0.0)) throw ValidationError("attribute sd must be positive");
    if (zero_fraction && !(*zero_fraction > 0.0 && *zero_fraction < 1.0)) {
        throw ValidationError("zero fraction must lie in (0, 1)");
    }
}

double expected_zero_fraction(Family family, const Eigen::VectorXd& mu, double dispersion) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < mu.size(); ++i) s += std::exp(observation_loglik(family, 0, mu[i], dispersion));
    return s / static_cast<double>(mu.size());
}

SynthResult synth_generate(const SynthSpec& spec, Rng& rng) {
    spec.validate();
    const int m = spec.zones;
    const auto n = static_cast<Eigen::Index>(m) * m;

    SynthResult r;
    r.truth.family = spec.family;
    r.truth.dispersion = spec.dispersion;

    std::vector<std::vector<double>> attributes(static_cast<std::size_t>(spec.attribute_pairs), std::vector<double>(static_cast<std::size_t>(m)));
    for (auto& a : attributes) {
        for (double& v : a) v = spec.attribute_sd * standard_normal(rng);
    }
    r.truth.x_coord.resize(static_cast<std::size_t>(m));
    r.truth.y_coord.resize(static_cast<std::size_t>(m));
    for (int z = 0; z < m; ++z) {
        r.truth.x_coord[static_cast<std::size_t>(z)] = 100.0 * uniform_open(rng);
        r.truth.y_coord[static_cast<std::size_t>(z)] = 100.0 * uniform_open(rng);
    }

    ODDataset& d = r.table.data;
    d.zones = m;
    d.X.resize(n, spec.coefficients());
    d.y.resize(n);
    d.covariate_names = {"intercept"};
    for (int j = 0; j < spec.attribute_pairs; ++j) {
        d.covariate_names.push_back("log_a" + std::to_string(j + 1) + "_o");
        d.covariate_names.push_back("log_a" + std::to_string(j + 1) + "_d");
    }
    if (spec.distance) d.covariate_names.push_back("log_distance");

    for (Eigen::Index i = 0; i < n; ++i) {
        const auto o = static_cast<std::size_t>(i / m);
        const auto k = static_cast<std::size_t>(i % m);
        Eigen::Index c = 0;
        d.X(i, c++) = 1.0;
        for (const auto& a : attributes) {
            d.X(i, c++) = a[o];
            d.X(i, c++) = a[k];
        }
        if (spec.distance) {
            const double dist = o == k ? kIntraZonalDistance
                                       : std::hypot(r.truth.x_coord[o] - r.truth.x_coord[k], r.truth.y_coord[o] - r.truth.y_coord[k]);
            d.X(i, c++) = std::log(dist);
        }
    }

    Eigen::VectorXd beta = spec.beta;
    if (spec.zero_fraction) {
        // Zero share falls as the intercept rises.
        auto zeros_at = [&](double b0) {
            beta[0] = b0;
            return expected_zero_fraction(spec.family, (d.X * beta).array().exp().matrix(), spec.dispersion);
        };
        double lo = -20.0, hi = 20.0;
        for (int it = 0; it < 100 && hi - lo > 1e-10; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (zeros_at(mid) > *spec.zero_fraction) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        beta[0] = 0.5 * (lo + hi);
    }
    r.truth.beta = beta;
    r.truth.mu = (d.X * beta).array().exp().matrix();
    r.truth.u.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        r.truth.u[i] = draw_mixing_effect(spec.family, spec.dispersion, rng);
        d.y[i] = static_cast<double>(poisson_draw(r.truth.mu[i] * r.truth.u[i], rng));
    }

    const int width = static_cast<int>(std::to_string(m).size());
    for (int z = 0; z < m; ++z) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "z%0*d", width, z + 1);
        r.table.zones.emplace_back(buf);
    }
    d.validate();
    return r;
}

Network synth_network(const SynthTruth& truth, const std::vector<std::string>& zones, double capacity_scale) {
    const std::size_t m = zones.size();
    if (truth.x_coord.size() != m || m < 2) throw ValidationError("network synthesis needs one position per zone");
    if (!(capacity_scale > 0.0)) throw ValidationError("capacity scale must be positive");
    auto dist = [&](std::size_t a, std::size_t b) {
        return std::max(0.5, std::hypot(truth.x_coord[a] - truth.x_coord[b], truth.y_coord[a] - truth.y_coord[b]));
    };

    Network net;
    for (const auto& z : zones) net.add_node(z);
    std::set<std::pair<std::size_t, std::size_t>> built;
    int next_id = 1;
    auto connect = [&](std::size_t a, std::size_t b, LinkType type, double speed_kmh, double capacity) {
        const auto key = std::minmax(a, b);
        if (a == b || !built.insert(key).second) return;
        const double tf = dist(a, b) / speed_kmh * 3600.0;
        for (auto [from, to] : {std::pair{a, b}, std::pair{b, a}}) {
            Link l;
            l.id = "L" + std::to_string(next_id++);
            l.from = static_cast<int>(from);
            l.to = static_cast<int>(to);
            l.free_flow_time = tf;
            l.capacity = capacity * capacity_scale;
            l.type = type;
            net.add_link(l);
        }
    };

    // Prim's tree from zone 0.
    std::vector<bool> in_tree(m, false);
    std::vector<double> best(m, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> parent(m, 0);
    best[0] = 0.0;
    for (std::size_t step = 0; step < m; ++step) {
        std::size_t u = m;
        for (std::size_t v = 0; v < m; ++v) {
            if (!in_tree[v] && (u == m || best[v] < best[u])) u = v;
        }
        in_tree[u] = true;
        if (u != 0) connect(parent[u], u, LinkType::main_regional, 90.0, 60.0);
        for (std::size_t v = 0; v < m; ++v) {
            if (!in_tree[v] && dist(u, v) < best[v]) {
                best[v] = dist(u, v);
                parent[v] = u;
            }
        }
    }
    for (std::size_t a = 0; a < m; ++a) {
        std::vector<std::size_t> order;
        for (std::size_t b = 0; b < m; ++b) {
            if (b != a) order.push_back(b);
        }
        std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
            const double dx = dist(a, x), dy = dist(a, y);
            return dx < dy || (dx == dy && x < y);
        });
        for (std::size_t k = 0; k < std::min<std::size_t>(3, order.size()); ++k) {
            connect(a, order[k], LinkType::local, 50.0, 25.0);
        }
    }
    net.validate();
    return net;
}

}  // namespace odmix
