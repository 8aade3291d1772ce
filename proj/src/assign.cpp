#include "odmix/assign.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <queue>
#include <sstream>
#include <thread>

#include "odmix/errors.hpp"

namespace odmix {

namespace {

constexpr std::array<std::pair<LinkType, std::string_view>, 5> kLinkTypes{{
    {LinkType::highway, "highway"},
    {LinkType::main_regional, "main_regional"},
    {LinkType::small_regional, "small_regional"},
    {LinkType::local, "local"},
    {LinkType::path, "path"},
}};

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Graph {
    // Outgoing link indices per node.
    std::vector<std::vector<int>> out;
};

Graph build_graph(const Network& network) {
    Graph g;
    g.out.resize(network.node_count());
    const auto& links = network.links();
    for (std::size_t l = 0; l < links.size(); ++l) g.out[static_cast<std::size_t>(links[l].from)].push_back(static_cast<int>(l));
    return g;
}

// Dijkstra from `source`; pred holds the incoming link of each node on the tree.
void shortest_tree(const Network& network, const Graph& g, const Eigen::VectorXd& costs, int source,
                   std::vector<double>& dist, std::vector<int>& pred) {
    const std::size_t n = network.node_count();
    dist.assign(n, kInf);
    pred.assign(n, -1);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    dist[static_cast<std::size_t>(source)] = 0.0;
    heap.emplace(0.0, source);
    const auto& links = network.links();
    while (!heap.empty()) {
        const auto [d, node] = heap.top();
        heap.pop();
        if (d > dist[static_cast<std::size_t>(node)]) continue;
        for (int l : g.out[static_cast<std::size_t>(node)]) {
            const int to = links[static_cast<std::size_t>(l)].to;
            const double nd = d + costs[l];
            // Ties broken by link index so trees are reproducible.
            double& cur = dist[static_cast<std::size_t>(to)];
            if (nd < cur || (nd == cur && pred[static_cast<std::size_t>(to)] > l)) {
                const bool improved = nd < cur;
                cur = nd;
                pred[static_cast<std::size_t>(to)] = l;
                if (improved) heap.emplace(nd, to);
            }
        }
    }
}

Eigen::VectorXd link_costs(const Network& network, const Eigen::VectorXd& volumes) {
    Eigen::VectorXd c(static_cast<Eigen::Index>(network.link_count()));
    const auto& links = network.links();
    for (std::size_t l = 0; l < links.size(); ++l) {
        c[static_cast<Eigen::Index>(l)] = link_time(links[l], volumes[static_cast<Eigen::Index>(l)]);
    }
    return c;
}

// Derivative of the Beckmann objective along v + lambda d.
double directional_slope(const Network& network, const Eigen::VectorXd& v, const Eigen::VectorXd& d, double lambda) {
    double s = 0.0;
    const auto& links = network.links();
    for (std::size_t l = 0; l < links.size(); ++l) {
        const auto i = static_cast<Eigen::Index>(l);
        if (d[i] == 0.0) continue;
        s += link_time(links[l], std::max(0.0, v[i] + lambda * d[i])) * d[i];
    }
    return s;
}

double bisection_step(const Network& network, const Eigen::VectorXd& v, const Eigen::VectorXd& d) {
    if (directional_slope(network, v, d, 1.0) <= 0.0) return 1.0;
    if (directional_slope(network, v, d, 0.0) >= 0.0) return 0.0;
    double lo = 0.0, hi = 1.0;
    for (int k = 0; k < 60 && hi - lo > 1e-14; ++k) {
        const double mid = 0.5 * (lo + hi);
        if (directional_slope(network, v, d, mid) > 0.0) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace

std::string_view to_string(LinkType type) {
    for (const auto& [t, name] : kLinkTypes) {
        if (t == type) return name;
    }
    return "local";
}

LinkType link_type_from_string(std::string_view name) {
    for (const auto& [t, n] : kLinkTypes) {
        if (n == name) return t;
    }
    throw ValidationError("unknown link type '" + std::string(name) + "'");
}

int Network::add_node(const std::string& name) {
    const auto it = index_.find(name);
    if (it != index_.end()) return it->second;
    const int idx = static_cast<int>(nodes_.size());
    nodes_.push_back(name);
    index_.emplace(name, idx);
    return idx;
}

int Network::node_index(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("unknown node '" + name + "'");
    return it->second;
}

void Network::add_link(Link link) {
    const int n = static_cast<int>(nodes_.size());
    if (link.from < 0 || link.from >= n || link.to < 0 || link.to >= n) {
        throw ValidationError("link '" + link.id + "' references a missing node");
    }
    links_.push_back(std::move(link));
}

void Network::validate() const {
    for (const Link& l : links_) {
        if (!(l.capacity > 0.0) || !std::isfinite(l.capacity)) {
            throw ValidationError("link '" + l.id + "': capacity must be positive");
        }
        if (!(l.free_flow_time > 0.0) || !std::isfinite(l.free_flow_time)) {
            throw ValidationError("link '" + l.id + "': free-flow time must be positive");
        }
        if (!(l.alpha >= 0.0) || !(l.beta >= 1.0) || !std::isfinite(l.alpha) || !std::isfinite(l.beta)) {
            throw ValidationError("link '" + l.id + "': BPR parameters need alpha >= 0 and beta >= 1");
        }
    }
}

void ODDemand::validate(const Network& network) const {
    const int nodes = static_cast<int>(network.node_count());
    for (std::size_t z = 0; z < zone_nodes.size(); ++z) {
        if (zone_nodes[z] < 0 || zone_nodes[z] >= nodes) {
            throw ValidationError("zone " + std::to_string(z) + " has no centroid node");
        }
    }
    const int zones = static_cast<int>(zone_nodes.size());
    for (const OdTrip& t : trips) {
        if (t.origin < 0 || t.origin >= zones || t.destination < 0 || t.destination >= zones) {
            throw ValidationError("trip " + std::to_string(t.origin) + "->" + std::to_string(t.destination) +
                                  " references an unknown zone");
        }
        if (t.origin == t.destination) {
            throw ValidationError("intra-zonal trip for zone " + std::to_string(t.origin) + " cannot be assigned");
        }
        if (!(t.demand >= 0.0) || !std::isfinite(t.demand)) {
            throw ValidationError("trip " + std::to_string(t.origin) + "->" + std::to_string(t.destination) +
                                  ": demand must be finite and nonnegative");
        }
    }
}

double bpr_time(double free_flow_time, double volume, double capacity, double alpha, double beta) {
    if (!(free_flow_time > 0.0) || !(capacity > 0.0)) throw DomainError("bpr_time: t_f and capacity must be positive");
    if (!(volume >= 0.0)) throw DomainError("bpr_time: negative volume " + std::to_string(volume));
    return free_flow_time * (1.0 + alpha * std::pow(volume / capacity, beta));
}

double link_time(const Link& link, double volume) {
    return bpr_time(link.free_flow_time, volume, link.capacity, link.alpha, link.beta);
}

double link_time_integral(const Link& link, double volume) {
    if (!(volume >= 0.0)) throw DomainError("link_time_integral: negative volume");
    const double r = volume / link.capacity;
    return link.free_flow_time * (volume + link.alpha * link.capacity * std::pow(r, link.beta + 1.0) / (link.beta + 1.0));
}

double beckmann_objective(const Network& network, const Eigen::VectorXd& volumes) {
    double z = 0.0;
    const auto& links = network.links();
    for (std::size_t l = 0; l < links.size(); ++l) z += link_time_integral(links[l], volumes[static_cast<Eigen::Index>(l)]);
    return z;
}

Eigen::VectorXd all_or_nothing(const Network& network, const ODDemand& demand, const Eigen::VectorXd& costs) {
    const Graph g = build_graph(network);
    Eigen::VectorXd load = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(network.link_count()));

    std::map<int, std::vector<const OdTrip*>> by_origin;
    for (const OdTrip& t : demand.trips) {
        if (t.demand > 0.0) by_origin[demand.zone_nodes[static_cast<std::size_t>(t.origin)]].push_back(&t);
    }
    std::vector<double> dist;
    std::vector<int> pred;
    const auto& links = network.links();
    for (const auto& [source, trips] : by_origin) {
        shortest_tree(network, g, costs, source, dist, pred);
        for (const OdTrip* t : trips) {
            int node = demand.zone_nodes[static_cast<std::size_t>(t->destination)];
            if (node == source) continue;  // zones sharing a centroid
            if (!std::isfinite(dist[static_cast<std::size_t>(node)])) {
                std::ostringstream os;
                os << "no path for OD pair " << t->origin << "->" << t->destination << " (node '"
                   << network.node_name(source) << "' to '" << network.node_name(node) << "')";
                throw AssignmentError(os.str());
            }
            while (node != source) {
                const int l = pred[static_cast<std::size_t>(node)];
                load[l] += t->demand;
                node = links[static_cast<std::size_t>(l)].from;
            }
        }
    }
    return load;
}

AssignmentResult due_assign(const Network& network, const ODDemand& demand, const AssignOptions& options) {
    network.validate();
    demand.validate(network);
    if (!(options.tol > 0.0) || options.max_iter < 1) throw ValidationError("assignment needs tol > 0 and max_iter >= 1");

    AssignmentResult r;
    Eigen::VectorXd free_flow(static_cast<Eigen::Index>(network.link_count()));
    for (std::size_t l = 0; l < network.link_count(); ++l) {
        free_flow[static_cast<Eigen::Index>(l)] = network.links()[l].free_flow_time;
    }
    r.volumes = all_or_nothing(network, demand, free_flow);
    r.objective.push_back(beckmann_objective(network, r.volumes));
    r.relative_gap = kInf;

    for (int it = 1; it <= options.max_iter; ++it) {
        r.iterations = it;
        const Eigen::VectorXd costs = link_costs(network, r.volumes);
        const Eigen::VectorXd aux = all_or_nothing(network, demand, costs);
        const double total = costs.dot(r.volumes);
        const double shortest = costs.dot(aux);
        r.relative_gap = total > 0.0 ? (total - shortest) / total : 0.0;
        if (r.relative_gap < options.tol) {
            r.converged = true;
            break;
        }
        const Eigen::VectorXd d = aux - r.volumes;
        const double step = bisection_step(network, r.volumes, d);
        r.volumes = (r.volumes + step * d).cwiseMax(0.0);
        r.objective.push_back(beckmann_objective(network, r.volumes));
    }
    if (!r.converged) {
        // Gap of the final flows, so the reported value describes the returned state.
        const Eigen::VectorXd costs = link_costs(network, r.volumes);
        const double total = costs.dot(r.volumes);
        const double shortest = costs.dot(all_or_nothing(network, demand, costs));
        r.relative_gap = total > 0.0 ? (total - shortest) / total : 0.0;
        r.converged = r.relative_gap < options.tol;
    }
    return r;
}

Eigen::VectorXd LinkFlowEnsemble::mean() const { return volumes.colwise().mean().transpose(); }

ODDemand od_row_demand(const Eigen::VectorXd& od_row, const std::vector<int>& zone_nodes, double peak_factor) {
    const int zones = static_cast<int>(zone_nodes.size());
    if (od_row.size() != static_cast<Eigen::Index>(zones) * zones) {
        throw ValidationError("OD row has " + std::to_string(od_row.size()) + " cells but the zone map implies " +
                              std::to_string(zones * zones));
    }
    if (!(peak_factor > 0.0)) throw ValidationError("peak factor must be positive");
    ODDemand d;
    d.zone_nodes = zone_nodes;
    for (int o = 0; o < zones; ++o) {
        for (int k = 0; k < zones; ++k) {
            if (o == k) continue;
            const double v = od_row[o * zones + k];
            if (v > 0.0) d.trips.push_back({o, k, peak_factor * v});
        }
    }
    return d;
}

LinkFlowEnsemble ensemble_assign(const Network& network, const PredictiveEnsemble& ensemble,
                                 const std::vector<int>& zone_nodes, double peak_factor,
                                 const AssignOptions& options, unsigned threads) {
    network.validate();
    const auto rows = static_cast<std::size_t>(ensemble.y_pred.rows());
    LinkFlowEnsemble out;
    out.volumes.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(network.link_count()));
    out.iterations.assign(rows, 0);
    out.gaps.assign(rows, 0.0);

    unsigned workers = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(rows, 1)));

    std::vector<std::exception_ptr> errors(rows);
    auto work = [&](unsigned w) {
        for (std::size_t m = w; m < rows; m += workers) {
            try {
                const ODDemand d =
                    od_row_demand(ensemble.y_pred.row(static_cast<Eigen::Index>(m)).transpose(), zone_nodes, peak_factor);
                const AssignmentResult r = due_assign(network, d, options);
                out.volumes.row(static_cast<Eigen::Index>(m)) = r.volumes.transpose();
                out.iterations[m] = r.iterations;
                out.gaps[m] = r.relative_gap;
            } catch (...) {
                errors[m] = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
        for (auto& t : pool) t.join();
    }
    for (std::size_t m = 0; m < rows; ++m) {
        if (!errors[m]) continue;
        try {
            std::rethrow_exception(errors[m]);
        } catch (const Error& e) {
            throw Error(e.category(), "ensemble row " + std::to_string(m) + ": " + e.what());
        }
    }
    return out;
}

std::vector<LinkCongestion> congestion_probability(const LinkFlowEnsemble& flows, const Network& network,
                                                   double threshold) {
    if (!(threshold > 0.0)) throw ValidationError("congestion threshold must be positive");
    if (flows.volumes.cols() != static_cast<Eigen::Index>(network.link_count())) {
        throw ValidationError("link-flow ensemble does not match the network");
    }
    std::vector<LinkCongestion> out(network.link_count());
    const auto rows = flows.volumes.rows();
    if (rows == 0) return out;
    for (std::size_t l = 0; l < out.size(); ++l) {
        const double cap = network.links()[l].capacity;
        double sum = 0.0;
        std::size_t over = 0;
        for (Eigen::Index m = 0; m < rows; ++m) {
            const double vc = flows.volumes(m, static_cast<Eigen::Index>(l)) / cap;
            sum += vc;
            if (vc > threshold) ++over;
        }
        out[l].mean_vc = sum / static_cast<double>(rows);
        out[l].exceedance = static_cast<double>(over) / static_cast<double>(rows);
    }
    return out;
}

Histogram vc_histogram(const LinkFlowEnsemble& flows, const Network& network, std::size_t link, int bins) {
    if (link >= network.link_count()) throw ValidationError("link index out of range");
    if (bins < 1) throw ValidationError("histogram needs at least one bin");
    const double cap = network.links()[link].capacity;
    const Eigen::ArrayXd vc = flows.volumes.col(static_cast<Eigen::Index>(link)).array() / cap;
    Histogram h;
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    double lo = vc.size() ? vc.minCoeff() : 0.0;
    double hi = vc.size() ? vc.maxCoeff() : 1.0;
    if (hi <= lo) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double width = (hi - lo) / bins;
    for (int b = 0; b <= bins; ++b) h.edges.push_back(lo + b * width);
    for (Eigen::Index m = 0; m < vc.size(); ++m) {
        auto b = static_cast<int>((vc[m] - lo) / width);
        b = std::clamp(b, 0, bins - 1);
        ++h.counts[static_cast<std::size_t>(b)];
    }
    return h;
}

}  // namespace odmix
