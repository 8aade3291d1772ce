#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace odmix {

/// Everything a command needs. Read from a flat `key = value` file, then
/// overridden by command-line flags of the same name.
struct RunConfig {
    // model
    std::string family = "PIG";
    double a = 1e-3;
    std::string pln_method = "quadrature";  ///< quadrature | montecarlo
    int quadrature_order = 64;
    int mc_draws = 2000;
    // chains
    int chains = 5;
    int iterations = 4200;
    int burn_in = 200;
    int thin = 5;
    double proposal_inflation = 1.0;  ///< multiplies the proposal covariance and dispersion variance
    double psrf_threshold = 1.1;
    unsigned threads = 1;
    // prediction
    int draws = 500;
    bool one_sided = false;
    // assignment
    double tol = 1e-4;
    int max_iter = 200;
    double peak_factor = 1.0;
    double bpr_alpha = 0.15;
    double bpr_beta = 4.0;
    double vc_threshold = 0.95;
    int histogram_bins = 20;
    // synthetic data
    int synth_zones = 45;
    std::string synth_beta = "0.2,0.5,-0.4";
    double synth_dispersion = 0.377;
    int synth_pairs = 1;
    bool synth_distance = false;
    std::optional<double> synth_zero_fraction;
    double synth_capacity_scale = 1.0;
    // run
    std::optional<std::uint64_t> seed;
    bool strict = false;
    std::string data;
    std::string network;
    std::string demand;
    std::string out = "odmix_out";

    /// Sets one key from text; ValidationError on unknown keys or bad values.
    void set(const std::string& key, const std::string& value);
    /// Applies every `key = value` line of a config file ('#' starts a comment).
    void apply_text(const std::string& text);
    void apply_file(const std::string& path);

    /// Range checks shared by all commands.
    void validate() const;

    /// Every key in a fixed order with its current value as text.
    std::vector<std::pair<std::string, std::string>> entries() const;

    static const std::vector<std::string>& keys();
    static std::string describe(const std::string& key);
};

}  // namespace odmix
