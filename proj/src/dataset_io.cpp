#include "odmix/dataset_io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "odmix/errors.hpp"

namespace odmix {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(trim(std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<int> line_numbers;
};

Csv parse_csv(const std::string& text, const std::string& what) {
    Csv csv;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto fields = split(t);
        if (csv.header.empty()) {
            csv.header = std::move(fields);
            continue;
        }
        if (fields.size() != csv.header.size()) {
            throw ValidationError(what + " line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(csv.header.size()) + " fields, found " + std::to_string(fields.size()));
        }
        csv.rows.push_back(std::move(fields));
        csv.line_numbers.push_back(line_no);
    }
    if (csv.header.empty()) throw ValidationError(what + ": missing header");
    return csv;
}

double parse_number(const std::string& field, const std::string& what, int line, const std::string& column) {
    double v = 0.0;
    const char* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), end, v);
    if (field.empty() || ec != std::errc() || ptr != end) {
        throw ValidationError(what + " line " + std::to_string(line) + ": column '" + column + "' is not a number ('" +
                              field + "')");
    }
    return v;
}

std::string join_names(const std::vector<std::string>& names) {
    std::string s;
    for (const auto& n : names) s += (s.empty() ? "" : ",") + n;
    return s;
}

void expect_columns(const Csv& csv, const std::vector<std::string>& names, const std::string& what) {
    if (csv.header.size() < names.size()) throw ValidationError(what + ": header must start with " + join_names(names));
    for (std::size_t k = 0; k < names.size(); ++k) {
        if (csv.header[k] != names[k]) {
            throw ValidationError(what + ": column " + std::to_string(k + 1) + " must be '" + names[k] + "', found '" +
                                  csv.header[k] + "'");
        }
    }
}

}  // namespace

std::string format_double(double x) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    if (ec != std::errc()) throw NumericalError("format_double: conversion failed");
    return std::string(buf, ptr);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write '" + path + "'");
    out << contents;
    if (!out) throw ValidationError("write to '" + path + "' failed");
}

OdTable load_od_csv(const std::string& path) { return parse_od_csv(read_file(path)); }

OdTable parse_od_csv(const std::string& text) {
    const std::string what = "OD file";
    const Csv csv = parse_csv(text, what);
    expect_columns(csv, {"origin", "destination", "flow"}, what);

    OdTable t;
    std::unordered_map<std::string, int> zone_index;
    auto zone_of = [&](const std::string& label) {
        const auto [it, fresh] = zone_index.emplace(label, static_cast<int>(t.zones.size()));
        if (fresh) t.zones.push_back(label);
        return it->second;
    };
    for (const auto& row : csv.rows) zone_of(row[0]);
    for (const auto& row : csv.rows) zone_of(row[1]);

    const int m = static_cast<int>(t.zones.size());
    const std::size_t n = csv.rows.size();
    if (n != static_cast<std::size_t>(m) * static_cast<std::size_t>(m)) {
        throw ValidationError("OD shape error: " + std::to_string(n) + " rows for " + std::to_string(m) +
                              " zones (expected " + std::to_string(m * m) + ")");
    }
    const std::size_t covariates = csv.header.size() - 3;
    t.data.zones = m;
    t.data.y.resize(static_cast<Eigen::Index>(n));
    t.data.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(covariates + 1));
    t.data.covariate_names = {"intercept"};
    for (std::size_t c = 0; c < covariates; ++c) t.data.covariate_names.push_back("log_" + csv.header[3 + c]);

    std::vector<bool> seen(n, false);
    for (std::size_t r = 0; r < n; ++r) {
        const auto& row = csv.rows[r];
        const int line = csv.line_numbers[r];
        const int o = zone_index.at(row[0]);
        const int d = zone_index.at(row[1]);
        const std::size_t i = static_cast<std::size_t>(o) * static_cast<std::size_t>(m) + static_cast<std::size_t>(d);
        if (seen[i]) throw ValidationError(what + " line " + std::to_string(line) + ": duplicate pair " + row[0] + "," + row[1]);
        seen[i] = true;

        const double flow = parse_number(row[2], what, line, "flow");
        if (!(flow >= 0.0) || flow != std::floor(flow) || !std::isfinite(flow)) {
            throw ValidationError(what + " line " + std::to_string(line) + ": flow must be a nonnegative integer, found " + row[2]);
        }
        const auto ii = static_cast<Eigen::Index>(i);
        t.data.y[ii] = flow;
        t.data.X(ii, 0) = 1.0;
        for (std::size_t c = 0; c < covariates; ++c) {
            const std::string& name = csv.header[3 + c];
            double v = parse_number(row[3 + c], what, line, name);
            if (name == "distance" && o == d) v = kIntraZonalDistance;
            if (!(v > 0.0) || !std::isfinite(v)) {
                throw ValidationError(what + " line " + std::to_string(line) + ": covariate '" + name +
                                      "' must be positive for the log transform, found " + row[3 + c]);
            }
            t.data.X(ii, static_cast<Eigen::Index>(c + 1)) = std::log(v);
        }
    }
    t.data.validate();
    return t;
}

std::string format_od_csv(const OdTable& table) {
    const ODDataset& d = table.data;
    if (table.zones.size() != static_cast<std::size_t>(d.zones)) throw ValidationError("zone labels do not match the dataset");
    std::ostringstream os;
    os << "origin,destination,flow";
    for (Eigen::Index c = 1; c < d.X.cols(); ++c) {
        const std::string& name = d.covariate_names.at(static_cast<std::size_t>(c));
        if (name.rfind("log_", 0) != 0) throw ValidationError("covariate '" + name + "' has no raw-scale column");
        os << ',' << name.substr(4);
    }
    os << '\n';
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        os << table.zones[static_cast<std::size_t>(d.origin_of(i))] << ','
           << table.zones[static_cast<std::size_t>(d.destination_of(i))] << ',' << d.count(i);
        for (Eigen::Index c = 1; c < d.X.cols(); ++c) os << ',' << format_double(std::exp(d.X(ii, c)));
        os << '\n';
    }
    return os.str();
}

void write_od_csv(const std::string& path, const OdTable& table) { write_file(path, format_od_csv(table)); }

Network load_network_csv(const std::string& path, double default_alpha, double default_beta) {
    return parse_network_csv(read_file(path), default_alpha, default_beta);
}

Network parse_network_csv(const std::string& text, double default_alpha, double default_beta) {
    const std::string what = "network file";
    const Csv csv = parse_csv(text, what);
    expect_columns(csv, {"link_id", "from", "to", "t_f", "capacity", "type", "alpha", "beta"}, what);
    Network net;
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        const auto& row = csv.rows[r];
        const int line = csv.line_numbers[r];
        Link l;
        l.id = row[0];
        l.from = net.add_node(row[1]);
        l.to = net.add_node(row[2]);
        l.free_flow_time = parse_number(row[3], what, line, "t_f");
        l.capacity = parse_number(row[4], what, line, "capacity");
        l.type = link_type_from_string(row[5]);
        l.alpha = row[6].empty() ? default_alpha : parse_number(row[6], what, line, "alpha");
        l.beta = row[7].empty() ? default_beta : parse_number(row[7], what, line, "beta");
        net.add_link(std::move(l));
    }
    net.validate();
    return net;
}

std::string format_network_csv(const Network& network) {
    std::ostringstream os;
    os << "link_id,from,to,t_f,capacity,type,alpha,beta\n";
    for (const Link& l : network.links()) {
        os << l.id << ',' << network.node_name(l.from) << ',' << network.node_name(l.to) << ','
           << format_double(l.free_flow_time) << ',' << format_double(l.capacity) << ',' << to_string(l.type) << ','
           << format_double(l.alpha) << ',' << format_double(l.beta) << '\n';
    }
    return os.str();
}

std::vector<int> zone_nodes(const Network& network, const std::vector<std::string>& zones) {
    std::vector<int> out;
    out.reserve(zones.size());
    for (const auto& z : zones) {
        try {
            out.push_back(network.node_index(z));
        } catch (const ValidationError&) {
            throw ValidationError("zone '" + z + "' has no centroid node of the same name in the network");
        }
    }
    return out;
}

ODDemand load_demand_csv(const std::string& path, const Network& network, std::vector<std::string>& zones) {
    const std::string what = "demand file";
    const Csv csv = parse_csv(read_file(path), what);
    expect_columns(csv, {"origin", "destination", "trips"}, what);
    std::map<std::string, int> index;
    zones.clear();
    auto zone_of = [&](const std::string& label) {
        const auto [it, fresh] = index.emplace(label, static_cast<int>(zones.size()));
        if (fresh) zones.push_back(label);
        return it->second;
    };
    ODDemand d;
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        const auto& row = csv.rows[r];
        const double trips = parse_number(row[2], what, csv.line_numbers[r], "trips");
        d.trips.push_back({zone_of(row[0]), zone_of(row[1]), trips});
    }
    d.zone_nodes = zone_nodes(network, zones);
    d.validate(network);
    return d;
}

}  // namespace odmix
