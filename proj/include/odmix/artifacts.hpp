#pragma once

#include <string>
#include <utility>
#include <vector>

#include "odmix/config.hpp"
#include "odmix/predict.hpp"
#include "odmix/sampler.hpp"

namespace odmix {

/// Every artifact starts with
///   # odmix <kind> v1
///   # version <library version>
///   # config <key>=<value>      (one line per RunConfig key)
///   # meta <key>=<value>        (artifact specific)
/// followed by a CSV header and rows.
struct ArtifactHeader {
    std::string kind;
    std::string version;
    RunConfig config;
    std::vector<std::pair<std::string, std::string>> meta;

    const std::string& meta_value(const std::string& key) const;  ///< ValidationError if absent
};

std::string library_version();

std::string format_preamble(const std::string& kind, const RunConfig& config,
                            const std::vector<std::pair<std::string, std::string>>& meta = {});

/// Splits an artifact into its preamble and the CSV body; checks the kind.
ArtifactHeader parse_preamble(const std::string& text, const std::string& expected_kind, std::string& body);

struct ChainArtifact {
    ArtifactHeader header;
    Family family = Family::PIG;
    std::vector<std::string> coefficient_names;
    ChainSet chains;
};

/// Columns: chain, iteration, one per coefficient, then the dispersion.
std::string format_chains(const ChainSet& chains, Family family, const std::vector<std::string>& coefficient_names,
                          const RunConfig& config);
ChainArtifact parse_chains(const std::string& text);

struct EnsembleArtifact {
    ArtifactHeader header;
    std::vector<std::string> zones;
    std::vector<std::string> coefficient_names;
    PredictiveEnsemble ensemble;  ///< u is not stored
};

/// Columns: draw, coefficients, dispersion, then y_0 .. y_{n-1}.
std::string format_ensemble(const PredictiveEnsemble& ensemble, const std::vector<std::string>& zones,
                            const std::vector<std::string>& coefficient_names, const RunConfig& config);
EnsembleArtifact parse_ensemble(const std::string& text);

}  // namespace odmix
