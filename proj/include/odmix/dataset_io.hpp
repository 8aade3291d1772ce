#pragma once

#include <string>
#include <vector>

#include "odmix/assign.hpp"
#include "odmix/model.hpp"

namespace odmix {

/// Intra-zonal distance used before taking logs.
inline constexpr double kIntraZonalDistance = 0.1;

/// A dataset plus the zone labels in matrix order.
struct OdTable {
    ODDataset data;
    std::vector<std::string> zones;
};

/// Reads `origin,destination,flow,<covariates...>`. Covariates enter X on the
/// log scale as `log_<column>`; a `distance` column is set to 0.1 on the
/// diagonal. Rows may come in any order; they are stored lexicographically
/// with zones in order of first appearance.
OdTable load_od_csv(const std::string& path);
OdTable parse_od_csv(const std::string& text);

/// Inverse of load_od_csv for datasets whose covariates are all `log_` columns.
void write_od_csv(const std::string& path, const OdTable& table);
std::string format_od_csv(const OdTable& table);

/// `link_id,from,to,t_f,capacity,type,alpha,beta`; empty alpha/beta take the defaults.
Network load_network_csv(const std::string& path, double default_alpha = 0.15, double default_beta = 4.0);
Network parse_network_csv(const std::string& text, double default_alpha = 0.15, double default_beta = 4.0);
std::string format_network_csv(const Network& network);

/// `origin,destination,trips` against the zone labels; zones map to the
/// network node of the same name.
ODDemand load_demand_csv(const std::string& path, const Network& network, std::vector<std::string>& zones);

/// Centroid node index of every zone label (same-named node).
std::vector<int> zone_nodes(const Network& network, const std::vector<std::string>& zones);

/// Shortest round-trip decimal form ("%.17g").
std::string format_double(double x);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace odmix
