#include "odmix/artifacts.hpp"

#include <charconv>
#include <sstream>

#include "odmix/dataset_io.hpp"
#include "odmix/errors.hpp"

namespace odmix {

namespace {

std::vector<std::string> split(const std::string& line, char sep = ',') {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, sep)) out.push_back(field);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

double to_double(const std::string& s, const std::string& what) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
        throw ValidationError(what + ": malformed number '" + s + "'");
    }
    return v;
}

template <typename T>
T to_integer(const std::string& s, const std::string& what) {
    T v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
        throw ValidationError(what + ": malformed integer '" + s + "'");
    }
    return v;
}

std::string join(const std::vector<std::string>& xs) {
    std::string s;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        if (k) s += ',';
        s += xs[k];
    }
    return s;
}

ChainConfig chain_config_from(const RunConfig& c) {
    ChainConfig cc;
    cc.n_chains = c.chains;
    cc.iterations = c.iterations;
    cc.burn_in = c.burn_in;
    cc.thin = c.thin;
    return cc;
}

}  // namespace

std::string library_version() { return ODMIX_VERSION; }

const std::string& ArtifactHeader::meta_value(const std::string& key) const {
    for (const auto& [k, v] : meta) {
        if (k == key) return v;
    }
    throw ValidationError(kind + " artifact lacks '" + key + "'");
}

std::string format_preamble(const std::string& kind, const RunConfig& config,
                            const std::vector<std::pair<std::string, std::string>>& meta) {
    std::ostringstream os;
    os << "# odmix " << kind << " v1\n";
    os << "# version " << library_version() << '\n';
    for (const auto& [k, v] : config.entries()) os << "# config " << k << '=' << v << '\n';
    for (const auto& [k, v] : meta) os << "# meta " << k << '=' << v << '\n';
    return os.str();
}

ArtifactHeader parse_preamble(const std::string& text, const std::string& expected_kind, std::string& body) {
    ArtifactHeader h;
    std::istringstream in(text);
    std::string line;
    std::ostringstream rest;
    bool first = true;
    while (std::getline(in, line)) {
        if (first) {
            first = false;
            const std::string want = "# odmix " + expected_kind + " v1";
            if (line != want) throw ValidationError("not an odmix " + expected_kind + " artifact (first line '" + line + "')");
            h.kind = expected_kind;
            continue;
        }
        if (line.rfind("# version ", 0) == 0) {
            h.version = line.substr(10);
        } else if (line.rfind("# config ", 0) == 0) {
            const std::string kv = line.substr(9);
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ValidationError("malformed config line in artifact: " + line);
            h.config.set(kv.substr(0, eq), kv.substr(eq + 1));
        } else if (line.rfind("# meta ", 0) == 0) {
            const std::string kv = line.substr(7);
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ValidationError("malformed meta line in artifact: " + line);
            h.meta.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
        } else {
            rest << line << '\n';
            break;
        }
    }
    if (first) throw ValidationError("empty " + expected_kind + " artifact");
    rest << in.rdbuf();
    body = rest.str();
    return h;
}

std::string format_chains(const ChainSet& chains, Family family, const std::vector<std::string>& coefficient_names,
                          const RunConfig& config) {
    std::vector<std::pair<std::string, std::string>> meta{{"family", std::string(to_string(family))},
                                                          {"coefficients", join(coefficient_names)}};
    for (std::size_t c = 0; c < chains.chains.size(); ++c) {
        const Chain& ch = chains.chains[c];
        std::ostringstream os;
        os << "seed=" << chains.config.seed_of(static_cast<int>(c)) << ";acceptance=" << format_double(ch.acceptance_rate)
           << ";accepted=" << ch.accepted << ";invalid=" << ch.invalid_proposals;
        meta.emplace_back("chain" + std::to_string(c), os.str());
    }
    std::ostringstream os;
    os << format_preamble("chains", config, meta);
    os << "chain,iteration";
    for (const auto& n : coefficient_names) os << ',' << n;
    os << ',' << dispersion_name(family) << '\n';
    for (std::size_t c = 0; c < chains.chains.size(); ++c) {
        const Chain& ch = chains.chains[c];
        for (std::size_t t = 0; t < ch.draws.size(); ++t) {
            os << c << ',' << (t < ch.iterations.size() ? ch.iterations[t] : static_cast<int>(t));
            for (Eigen::Index j = 0; j < ch.draws[t].beta.size(); ++j) os << ',' << format_double(ch.draws[t].beta[j]);
            os << ',' << format_double(ch.draws[t].dispersion) << '\n';
        }
    }
    return os.str();
}

ChainArtifact parse_chains(const std::string& text) {
    ChainArtifact a;
    std::string body;
    a.header = parse_preamble(text, "chains", body);
    a.family = family_from_string(a.header.meta_value("family"));
    a.coefficient_names = split(a.header.meta_value("coefficients"));
    const std::size_t p = a.coefficient_names.size();
    a.chains.config = chain_config_from(a.header.config);
    if (a.header.config.seed) a.chains.config.master_seed = *a.header.config.seed;

    std::istringstream in(body);
    std::string line;
    std::getline(in, line);  // column header
    const auto columns = split(line);
    if (columns.size() != p + 3) throw ValidationError("chains artifact: header has " + std::to_string(columns.size()) + " columns");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split(line);
        if (f.size() != p + 3) throw ValidationError("chains artifact: malformed row '" + line + "'");
        const auto c = to_integer<std::size_t>(f[0], "chains artifact");
        if (c >= a.chains.chains.size()) a.chains.chains.resize(c + 1);
        Chain& ch = a.chains.chains[c];
        ParamPoint pt;
        pt.beta.resize(static_cast<Eigen::Index>(p));
        for (std::size_t j = 0; j < p; ++j) pt.beta[static_cast<Eigen::Index>(j)] = to_double(f[2 + j], "chains artifact");
        pt.dispersion = to_double(f[2 + p], "chains artifact");
        ch.iterations.push_back(to_integer<int>(f[1], "chains artifact"));
        ch.draws.push_back(std::move(pt));
    }
    for (std::size_t c = 0; c < a.chains.chains.size(); ++c) {
        for (const auto& [k, v] : a.header.meta) {
            if (k != "chain" + std::to_string(c)) continue;
            for (const auto& part : split(v, ';')) {
                const auto eq = part.find('=');
                if (eq == std::string::npos) continue;
                const std::string key = part.substr(0, eq), val = part.substr(eq + 1);
                Chain& ch = a.chains.chains[c];
                if (key == "acceptance") ch.acceptance_rate = to_double(val, "chains artifact");
                if (key == "accepted") ch.accepted = to_integer<long>(val, "chains artifact");
                if (key == "invalid") ch.invalid_proposals = to_integer<long>(val, "chains artifact");
            }
        }
    }
    a.chains.config.n_chains = static_cast<int>(a.chains.chains.size());
    if (a.chains.chains.empty()) throw ValidationError("chains artifact holds no draws");
    return a;
}

std::string format_ensemble(const PredictiveEnsemble& ensemble, const std::vector<std::string>& zones,
                            const std::vector<std::string>& coefficient_names, const RunConfig& config) {
    std::ostringstream os;
    os << format_preamble("ensemble", config,
                          {{"family", std::string(to_string(ensemble.family))},
                           {"zones", join(zones)},
                           {"coefficients", join(coefficient_names)}});
    os << "draw";
    for (const auto& n : coefficient_names) os << ',' << n;
    os << ',' << dispersion_name(ensemble.family);
    for (Eigen::Index i = 0; i < ensemble.y_pred.cols(); ++i) os << ",y" << i;
    os << '\n';
    for (std::size_t m = 0; m < ensemble.rows(); ++m) {
        const ParamPoint& p = ensemble.params[m];
        os << (m < ensemble.draw_index.size() ? ensemble.draw_index[m] : m);
        for (Eigen::Index j = 0; j < p.beta.size(); ++j) os << ',' << format_double(p.beta[j]);
        os << ',' << format_double(p.dispersion);
        const auto row = static_cast<Eigen::Index>(m);
        for (Eigen::Index i = 0; i < ensemble.y_pred.cols(); ++i) {
            os << ',' << static_cast<long long>(ensemble.y_pred(row, i));
        }
        os << '\n';
    }
    return os.str();
}

EnsembleArtifact parse_ensemble(const std::string& text) {
    EnsembleArtifact a;
    std::string body;
    a.header = parse_preamble(text, "ensemble", body);
    a.ensemble.family = family_from_string(a.header.meta_value("family"));
    a.zones = split(a.header.meta_value("zones"));
    a.coefficient_names = split(a.header.meta_value("coefficients"));
    const std::size_t p = a.coefficient_names.size();
    const std::size_t n = a.zones.size() * a.zones.size();

    std::istringstream in(body);
    std::string line;
    std::getline(in, line);
    if (split(line).size() != 2 + p + n) throw ValidationError("ensemble artifact: header does not match the zone count");
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split(line);
        if (f.size() != 2 + p + n) throw ValidationError("ensemble artifact: malformed row");
        ParamPoint pt;
        pt.beta.resize(static_cast<Eigen::Index>(p));
        for (std::size_t j = 0; j < p; ++j) pt.beta[static_cast<Eigen::Index>(j)] = to_double(f[1 + j], "ensemble artifact");
        pt.dispersion = to_double(f[1 + p], "ensemble artifact");
        a.ensemble.draw_index.push_back(to_integer<std::size_t>(f[0], "ensemble artifact"));
        a.ensemble.params.push_back(std::move(pt));
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = to_double(f[2 + p + i], "ensemble artifact");
        rows.push_back(std::move(y));
    }
    a.ensemble.y_pred.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(n));
    for (std::size_t m = 0; m < rows.size(); ++m) {
        for (std::size_t i = 0; i < n; ++i) a.ensemble.y_pred(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(i)) = rows[m][i];
    }
    return a;
}

}  // namespace odmix
