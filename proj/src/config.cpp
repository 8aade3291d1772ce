#include "odmix/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <sstream>
#include <variant>

#include "odmix/dataset_io.hpp"
#include "odmix/errors.hpp"
#include "odmix/model.hpp"

namespace odmix {

namespace {

using Member = std::variant<std::string RunConfig::*, double RunConfig::*, int RunConfig::*, unsigned RunConfig::*,
                            bool RunConfig::*, std::optional<double> RunConfig::*,
                            std::optional<std::uint64_t> RunConfig::*>;

struct Key {
    const char* name;
    Member member;
    const char* help;
};

const std::vector<Key>& table() {
    static const std::vector<Key> t{
        {"family", &RunConfig::family, "mixture family: PG, PLN or PIG"},
        {"a", &RunConfig::a, "dispersion hyperprior parameter"},
        {"pln_method", &RunConfig::pln_method, "PLN integration: quadrature or montecarlo"},
        {"quadrature_order", &RunConfig::quadrature_order, "Gauss-Hermite order for PLN"},
        {"mc_draws", &RunConfig::mc_draws, "Monte Carlo size for PLN"},
        {"chains", &RunConfig::chains, "number of chains"},
        {"iterations", &RunConfig::iterations, "iterations per chain"},
        {"burn_in", &RunConfig::burn_in, "discarded iterations per chain"},
        {"thin", &RunConfig::thin, "keep every thin-th draw"},
        {"proposal_inflation", &RunConfig::proposal_inflation, "proposal variance multiplier"},
        {"psrf_threshold", &RunConfig::psrf_threshold, "PSRF above this is reported as a warning"},
        {"threads", &RunConfig::threads, "worker threads (0 = hardware)"},
        {"draws", &RunConfig::draws, "predictive ensemble size"},
        {"one_sided", &RunConfig::one_sided, "one-sided aggregate p-values"},
        {"tol", &RunConfig::tol, "assignment relative gap"},
        {"max_iter", &RunConfig::max_iter, "assignment iteration cap"},
        {"peak_factor", &RunConfig::peak_factor, "OD to modeled-hour scaling"},
        {"bpr_alpha", &RunConfig::bpr_alpha, "default BPR alpha"},
        {"bpr_beta", &RunConfig::bpr_beta, "default BPR beta"},
        {"vc_threshold", &RunConfig::vc_threshold, "V/C congestion threshold"},
        {"histogram_bins", &RunConfig::histogram_bins, "bins of the per-link V/C histograms"},
        {"synth_zones", &RunConfig::synth_zones, "synthetic zone count"},
        {"synth_beta", &RunConfig::synth_beta, "synthetic coefficients, comma separated"},
        {"synth_dispersion", &RunConfig::synth_dispersion, "synthetic dispersion"},
        {"synth_pairs", &RunConfig::synth_pairs, "synthetic origin/destination attribute pairs"},
        {"synth_distance", &RunConfig::synth_distance, "add a log distance covariate"},
        {"synth_zero_fraction", &RunConfig::synth_zero_fraction, "tune the intercept to this zero share"},
        {"synth_capacity_scale", &RunConfig::synth_capacity_scale, "capacity multiplier of the synthetic network"},
        {"seed", &RunConfig::seed, "master seed"},
        {"strict", &RunConfig::strict, "treat convergence warnings as errors"},
        {"data", &RunConfig::data, "OD csv"},
        {"network", &RunConfig::network, "network csv"},
        {"demand", &RunConfig::demand, "demand csv (assign without an ensemble)"},
        {"out", &RunConfig::out, "output directory"},
    };
    return t;
}

const Key& find(const std::string& key) {
    for (const Key& k : table()) {
        if (key == k.name) return k;
    }
    throw ValidationError("unknown config key '" + key + "'");
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
    T v{};
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (text.empty() || ec != std::errc() || ptr != end) {
        throw ValidationError("config '" + key + "': cannot parse '" + text + "'");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw ValidationError("config '" + key + "': expected a boolean, found '" + text + "'");
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename T>
void require(bool ok, const char* key, T value, const char* rule) {
    if (!ok) {
        std::ostringstream os;
        os << "config '" << key << "' = " << value << ": " << rule;
        throw ValidationError(os.str());
    }
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& raw) {
    const Key& k = find(key);
    const std::string value = trim(raw);
    std::visit(
        [&](auto member) {
            using T = std::remove_reference_t<decltype(this->*member)>;
            if constexpr (std::is_same_v<T, std::string>) {
                this->*member = value;
            } else if constexpr (std::is_same_v<T, bool>) {
                this->*member = parse_bool(key, value);
            } else if constexpr (std::is_same_v<T, std::optional<double>>) {
                if (value.empty() || value == "none") {
                    (this->*member).reset();
                } else {
                    this->*member = parse_value<double>(key, value);
                }
            } else if constexpr (std::is_same_v<T, std::optional<std::uint64_t>>) {
                if (value.empty() || value == "none") {
                    (this->*member).reset();
                } else {
                    this->*member = parse_value<std::uint64_t>(key, value);
                }
            } else {
                this->*member = parse_value<T>(key, value);
            }
        },
        k.member);
}

void RunConfig::apply_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        set(trim(body.substr(0, eq)), body.substr(eq + 1));
    }
}

void RunConfig::apply_file(const std::string& path) { apply_text(read_file(path)); }

void RunConfig::validate() const {
    family_from_string(family);
    require(a > 0.0 && std::isfinite(a), "a", a, "must be positive");
    require(pln_method == "quadrature" || pln_method == "montecarlo", "pln_method", pln_method,
            "must be quadrature or montecarlo");
    require(quadrature_order >= 10 && quadrature_order <= 512, "quadrature_order", quadrature_order, "must be in [10, 512]");
    require(mc_draws >= 1, "mc_draws", mc_draws, "must be at least 1");
    require(chains >= 1, "chains", chains, "must be at least 1");
    require(iterations >= 1, "iterations", iterations, "must be at least 1");
    require(burn_in >= 0 && burn_in < iterations, "burn_in", burn_in, "must be in [0, iterations)");
    require(thin >= 1, "thin", thin, "must be at least 1");
    require(proposal_inflation > 0.0, "proposal_inflation", proposal_inflation, "must be positive");
    require(psrf_threshold > 1.0, "psrf_threshold", psrf_threshold, "must exceed 1");
    require(draws >= 0, "draws", draws, "must be nonnegative (0 = all pooled draws)");
    require(tol > 0.0, "tol", tol, "must be positive");
    require(max_iter >= 1, "max_iter", max_iter, "must be at least 1");
    require(peak_factor > 0.0, "peak_factor", peak_factor, "must be positive");
    require(bpr_alpha >= 0.0, "bpr_alpha", bpr_alpha, "must be nonnegative");
    require(bpr_beta >= 1.0, "bpr_beta", bpr_beta, "must be at least 1");
    require(vc_threshold > 0.0, "vc_threshold", vc_threshold, "must be positive");
    require(histogram_bins >= 1, "histogram_bins", histogram_bins, "must be at least 1");
    require(synth_zones >= 2, "synth_zones", synth_zones, "must be at least 2");
    require(synth_dispersion > 0.0, "synth_dispersion", synth_dispersion, "must be positive");
    require(synth_pairs >= 0, "synth_pairs", synth_pairs, "must be nonnegative");
    require(synth_capacity_scale > 0.0, "synth_capacity_scale", synth_capacity_scale, "must be positive");
    require(!out.empty(), "out", out, "must name a directory");
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
    std::vector<std::pair<std::string, std::string>> out_entries;
    for (const Key& k : table()) {
        std::string text = std::visit(
            [&](auto member) -> std::string {
                using T = std::remove_cvref_t<decltype(this->*member)>;
                const T& v = this->*member;
                if constexpr (std::is_same_v<T, std::string>) {
                    return v;
                } else if constexpr (std::is_same_v<T, bool>) {
                    return v ? "true" : "false";
                } else if constexpr (std::is_same_v<T, double>) {
                    return format_double(v);
                } else if constexpr (std::is_same_v<T, std::optional<double>>) {
                    return v ? format_double(*v) : "none";
                } else if constexpr (std::is_same_v<T, std::optional<std::uint64_t>>) {
                    return v ? std::to_string(*v) : "none";
                } else {
                    return std::to_string(v);
                }
            },
            k.member);
        out_entries.emplace_back(k.name, std::move(text));
    }
    return out_entries;
}

const std::vector<std::string>& RunConfig::keys() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const Key& k : table()) v.emplace_back(k.name);
        return v;
    }();
    return names;
}

std::string RunConfig::describe(const std::string& key) { return find(key).help; }

}  // namespace odmix
