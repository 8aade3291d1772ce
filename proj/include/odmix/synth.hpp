#pragma once

#include <optional>
#include <string>
#include <vector>

#include "odmix/assign.hpp"
#include "odmix/dataset_io.hpp"

namespace odmix {

/// Recipe for a synthetic OD matrix. Columns of X: intercept, then
/// log a_j(origin), log a_j(destination) for each attribute pair j, then
/// log distance when `distance` is set.
struct SynthSpec {
    int zones = 45;
    Family family = Family::PIG;
    Eigen::VectorXd beta;   ///< length 1 + 2 pairs + distance
    double dispersion = 1.0;
    int attribute_pairs = 1;
    bool distance = false;
    double attribute_sd = 1.0;  ///< sd of each log attribute
    /// When set, beta[0] is replaced by the intercept whose expected share of
    /// zero cells equals this value.
    std::optional<double> zero_fraction;

    int coefficients() const { return 1 + 2 * attribute_pairs + (distance ? 1 : 0); }
    void validate() const;
};

struct SynthTruth {
    Family family = Family::PIG;
    Eigen::VectorXd beta;
    double dispersion = 1.0;
    Eigen::VectorXd mu;
    Eigen::VectorXd u;
    std::vector<double> x_coord;  ///< zone positions (km)
    std::vector<double> y_coord;
};

struct SynthResult {
    OdTable table;
    SynthTruth truth;
};

SynthResult synth_generate(const SynthSpec& spec, Rng& rng);

/// Expected fraction of zero cells under the marginal pmf.
double expected_zero_fraction(Family family, const Eigen::VectorXd& mu, double dispersion);

/// Zone-to-zone road network: a minimum spanning tree of main roads plus
/// local links to each zone's nearest neighbours, all two-way. Nodes carry
/// the zone labels.
Network synth_network(const SynthTruth& truth, const std::vector<std::string>& zones, double capacity_scale = 1.0);

}  // namespace odmix
