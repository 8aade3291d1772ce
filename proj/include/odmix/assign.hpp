#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "odmix/predict.hpp"

namespace odmix {

enum class LinkType { highway, main_regional, small_regional, local, path };

std::string_view to_string(LinkType type);
LinkType link_type_from_string(std::string_view name);

struct Link {
    std::string id;
    int from = 0;  ///< node index
    int to = 0;
    double free_flow_time = 1.0;  ///< seconds
    double capacity = 1.0;        ///< vehicles / hour
    LinkType type = LinkType::local;
    double alpha = 0.15;
    double beta = 4.0;
};

class Network {
public:
    /// Index of `name`, adding the node if new.
    int add_node(const std::string& name);
    int node_index(const std::string& name) const;  ///< ValidationError if unknown
    const std::string& node_name(int index) const { return nodes_.at(static_cast<std::size_t>(index)); }
    std::size_t node_count() const { return nodes_.size(); }

    void add_link(Link link);
    const std::vector<Link>& links() const { return links_; }
    std::size_t link_count() const { return links_.size(); }

    /// Positive capacities and free-flow times, beta >= 1, alpha >= 0.
    void validate() const;

private:
    std::vector<std::string> nodes_;
    std::unordered_map<std::string, int> index_;
    std::vector<Link> links_;
};

struct OdTrip {
    int origin = 0;  ///< zone
    int destination = 0;
    double demand = 0.0;  ///< trips / hour
};

struct ODDemand {
    std::vector<OdTrip> trips;
    std::vector<int> zone_nodes;  ///< centroid node of each zone

    void validate(const Network& network) const;
};

/// t_f (1 + alpha (v / c)^beta).
double bpr_time(double free_flow_time, double volume, double capacity, double alpha, double beta);
double link_time(const Link& link, double volume);
/// Integral of the link time from 0 to `volume`.
double link_time_integral(const Link& link, double volume);
double beckmann_objective(const Network& network, const Eigen::VectorXd& volumes);

struct AssignOptions {
    double tol = 1e-4;  ///< relative gap
    int max_iter = 200;
};

struct AssignmentResult {
    Eigen::VectorXd volumes;
    int iterations = 0;
    double relative_gap = 0.0;
    bool converged = false;
    std::vector<double> objective;  ///< Beckmann value after each update, starting from the initial load
};

/// Frank-Wolfe equilibrium with bisection line search.
AssignmentResult due_assign(const Network& network, const ODDemand& demand, const AssignOptions& options = {});

/// All-or-nothing load on shortest paths under fixed link costs.
Eigen::VectorXd all_or_nothing(const Network& network, const ODDemand& demand, const Eigen::VectorXd& costs);

struct LinkFlowEnsemble {
    Eigen::MatrixXd volumes;  ///< M x links
    std::vector<int> iterations;
    std::vector<double> gaps;

    /// Column means: the "mean state" of the network.
    Eigen::VectorXd mean() const;
};

/// Demand for the inter-zonal cells of one OD row (lexicographic, zones^2 long),
/// scaled by `peak_factor`.
ODDemand od_row_demand(const Eigen::VectorXd& od_row, const std::vector<int>& zone_nodes, double peak_factor);

/// Assigns every ensemble row; rows run on `threads` workers (0 = hardware).
LinkFlowEnsemble ensemble_assign(const Network& network, const PredictiveEnsemble& ensemble,
                                 const std::vector<int>& zone_nodes, double peak_factor,
                                 const AssignOptions& options = {}, unsigned threads = 0);

struct LinkCongestion {
    double mean_vc = 0.0;
    double exceedance = 0.0;  ///< P(V/C > threshold)
};

std::vector<LinkCongestion> congestion_probability(const LinkFlowEnsemble& flows, const Network& network,
                                                   double threshold);

struct Histogram {
    std::vector<double> edges;  ///< bins + 1
    std::vector<std::size_t> counts;
};

/// V/C histogram of one link over the ensemble rows.
Histogram vc_histogram(const LinkFlowEnsemble& flows, const Network& network, std::size_t link, int bins = 20);

}  // namespace odmix
