#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "odmix/calibrate.hpp"
#include "odmix/config.hpp"
#include "odmix/errors.hpp"
#include "odmix/sampler.hpp"

namespace odmix {

/// Stream indices under the master seed.
inline constexpr std::uint64_t kSynthStream = 0;
inline constexpr std::uint64_t kChainStream = 1;
inline constexpr std::uint64_t kPredictStream = 2;
inline constexpr std::uint64_t kPlnStream = 3;

/// ML fit, moment-matched proposal and independence chains for one dataset.
struct PosteriorFit {
    ModelSpec spec;
    MlFit ml;
    ProposalSpec proposal;
    ChainSet chains;
    PsrfReport psrf;
};

PosteriorFit fit_posterior(const ODDataset& data, const ModelSpec& spec, const ChainConfig& chains,
                           double proposal_inflation = 1.0);

ModelSpec model_spec(const RunConfig& config, const ODDataset& data);
ChainConfig chain_config(const RunConfig& config);

inline const std::vector<std::string>& command_verbs() {
    static const std::vector<std::string> verbs{"fit", "predict", "assign", "report", "sweep-a", "synth"};
    return verbs;
}

/// Runs one verb against `config.out`. Returns the process exit status:
/// 0 on success, otherwise the error category (2 validation, 3 missing
/// upstream artifact, 4 numerical, 5 convergence). Messages go to `err`
/// as `error[<category>]: <message>`.
int run_command(const std::string& verb, const RunConfig& config, std::ostream& out, std::ostream& err);

std::string category_name(ErrorCategory category);

}  // namespace odmix
