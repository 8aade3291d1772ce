#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "odmix/commands.hpp"
#include "odmix/config.hpp"
#include "odmix/errors.hpp"

namespace {

std::string flag_of(std::string key) {
    for (char& c : key) {
        if (c == '_') c = '-';
    }
    return "--" + key;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian OD-matrix mixtures and equilibrium assignment"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_file;
    std::map<std::string, std::string> overrides;
    std::map<std::string, CLI::Option*> options;

    std::map<std::string, CLI::App*> verbs;
    const std::map<std::string, std::string> blurbs{
        {"fit", "ML fit, proposals and independence chains"},
        {"predict", "predictive ensemble, p-values, criteria and density exports"},
        {"assign", "equilibrium assignment of the ensemble (or a demand file)"},
        {"report", "human-readable digest of the artifacts in --out"},
        {"sweep-a", "fits at a = 0.001, 0.1 and 1 with dispersion summaries"},
        {"synth", "synthetic OD matrix, truth record and network"},
    };
    for (const auto& verb : odmix::command_verbs()) verbs[verb] = app.add_subcommand(verb, blurbs.at(verb));

    app.add_option("-c,--config", config_file, "key = value config file; flags override it")->check(CLI::ExistingFile);
    for (const auto& key : odmix::RunConfig::keys()) {
        options[key] = app.add_option(flag_of(key), overrides[key], odmix::RunConfig::describe(key));
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(odmix::ErrorCategory::validation);
    }

    odmix::RunConfig config;
    try {
        if (!config_file.empty()) config.apply_file(config_file);
        for (const auto& key : odmix::RunConfig::keys()) {
            if (options[key]->count() > 0) config.set(key, overrides[key]);
        }
    } catch (const odmix::Error& e) {
        std::cerr << "error[" << odmix::category_name(e.category()) << "]: " << e.what() << '\n';
        return static_cast<int>(e.category());
    }

    for (const auto& [verb, sub] : verbs) {
        if (sub->parsed()) return odmix::run_command(verb, config, std::cout, std::cerr);
    }
    return static_cast<int>(odmix::ErrorCategory::validation);
}
