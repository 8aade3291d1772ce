#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "odmix/artifacts.hpp"
#include "odmix/assign.hpp"
#include "odmix/commands.hpp"
#include "odmix/dataset_io.hpp"
#include "odmix/distmath.hpp"
#include "odmix/model.hpp"
#include "odmix/predict.hpp"
#include "odmix/sampler.hpp"
#include "odmix/synth.hpp"

namespace py = pybind11;
using namespace odmix;

namespace {

ODDataset make_dataset(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, std::vector<std::string> names) {
    const auto n = static_cast<double>(y.size());
    ODDataset d;
    d.zones = static_cast<int>(std::lround(std::sqrt(n)));
    d.y = y;
    d.X = X;
    if (names.empty()) {
        names.push_back("intercept");
        for (Eigen::Index j = 1; j < X.cols(); ++j) names.push_back("x" + std::to_string(j));
    }
    d.covariate_names = std::move(names);
    d.validate();
    return d;
}

// Pooled draws as an (N, p + 1) array, dispersion last.
Eigen::MatrixXd pooled_matrix(const ChainSet& chains) {
    const auto pooled = chains.pooled();
    if (pooled.empty()) return {};
    const auto p = pooled.front().beta.size();
    Eigen::MatrixXd out(static_cast<Eigen::Index>(pooled.size()), p + 1);
    for (std::size_t i = 0; i < pooled.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        out.row(r).head(p) = pooled[i].beta.transpose();
        out(r, p) = pooled[i].dispersion;
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_odmix, m) {
    m.doc() = "Poisson mixture OD-matrix models and traffic assignment";

    // Later registrations are tried first, so the base class goes first.
    auto& base = py::register_exception<Error>(m, "OdmixError");
    py::register_exception<DomainError>(m, "DomainError", base.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<DependencyError>(m, "DependencyError", base.ptr());
    py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
    py::register_exception<ConvergenceError>(m, "ConvergenceError", base.ptr());
    py::register_exception<AssignmentError>(m, "AssignmentError", base.ptr());

    py::enum_<Family>(m, "Family")
        .value("PG", Family::PG)
        .value("PLN", Family::PLN)
        .value("PIG", Family::PIG);

    m.def("pig_logpmf", &pig_logpmf, py::arg("y"), py::arg("mu"), py::arg("zeta"));
    m.def("nb_logpmf", &nb_logpmf, py::arg("y"), py::arg("mu"), py::arg("theta"));
    m.def("pln_logpmf", [](Count y, double mu, double sigma2) { return pln_logpmf(y, mu, sigma2); },
          py::arg("y"), py::arg("mu"), py::arg("sigma2"));
    m.def("poisson_logpmf", &poisson_logpmf, py::arg("y"), py::arg("mean"));
    m.def("log_bessel_k", &log_bessel_k, py::arg("nu"), py::arg("z"));
    m.def("gig_mean", [](double lambda, double psi, double chi) { return gig_mean({lambda, psi, chi}); },
          py::arg("lambda_"), py::arg("psi"), py::arg("chi"));
    m.def(
        "marginal_moments",
        [](Family f, double mu, double dispersion) {
            const auto mm = marginal_moments(f, mu, dispersion);
            return py::make_tuple(mm.mean, mm.variance);
        },
        py::arg("family"), py::arg("mu"), py::arg("dispersion"), "(mean, variance) of one cell");

    py::class_<ODDataset>(m, "ODDataset")
        .def(py::init(&make_dataset), py::arg("y"), py::arg("X"), py::arg("names") = std::vector<std::string>{})
        .def_readonly("zones", &ODDataset::zones)
        .def_readonly("y", &ODDataset::y)
        .def_readonly("X", &ODDataset::X)
        .def_readonly("names", &ODDataset::covariate_names)
        .def("__len__", &ODDataset::size);

    m.def(
        "load_od_csv",
        [](const std::string& path) {
            OdTable t = load_od_csv(path);
            return py::make_tuple(t.data, t.zones);
        },
        py::arg("path"), "(dataset, zone labels)");

    m.def(
        "synthesize",
        [](Family f, const Eigen::VectorXd& beta, double dispersion, int zones, bool distance, std::uint64_t seed) {
            SynthSpec spec;
            spec.family = f;
            spec.beta = beta;
            spec.dispersion = dispersion;
            spec.zones = zones;
            spec.distance = distance;
            spec.attribute_pairs = static_cast<int>((beta.size() - 1 - (distance ? 1 : 0)) / 2);
            Rng rng(seed);
            return synth_generate(spec, rng).table.data;
        },
        py::arg("family"), py::arg("beta"), py::arg("dispersion"), py::arg("zones") = 45, py::arg("distance") = false,
        py::arg("seed") = 0);

    py::class_<PosteriorFit>(m, "PosteriorFit")
        .def_property_readonly("draws", [](const PosteriorFit& f) { return pooled_matrix(f.chains); },
                               "pooled draws, one row each; dispersion in the last column")
        .def_property_readonly("acceptance",
                               [](const PosteriorFit& f) {
                                   std::vector<double> a;
                                   for (const auto& c : f.chains.chains) a.push_back(c.acceptance_rate);
                                   return a;
                               })
        .def_property_readonly("psrf", [](const PosteriorFit& f) { return f.psrf.univariate; })
        .def_property_readonly("ml_beta", [](const PosteriorFit& f) { return f.ml.beta_hat; })
        .def_property_readonly("ml_dispersion", [](const PosteriorFit& f) { return f.ml.dispersion_hat; });

    m.def(
        "fit",
        [](const ODDataset& data, Family f, std::uint64_t seed, double a, int chains, int iterations, int burn_in,
           int thin) {
            ChainConfig c;
            c.master_seed = derive_seed(seed, kChainStream);
            c.n_chains = chains;
            c.iterations = iterations;
            c.burn_in = burn_in;
            c.thin = thin;
            if (chains != 5) {
                c.start_quantiles.clear();
                for (int k = 0; k < chains; ++k) c.start_quantiles.push_back((k + 0.5) / chains);
            }
            ModelSpec spec = make_spec(f, data, a);
            spec.pln.seed = derive_seed(seed, kPlnStream);
            py::gil_scoped_release release;
            return fit_posterior(data, spec, c);
        },
        py::arg("data"), py::arg("family"), py::arg("seed"), py::arg("a") = 1e-3, py::arg("chains") = 5,
        py::arg("iterations") = 4200, py::arg("burn_in") = 200, py::arg("thin") = 5);

    m.def(
        "criteria",
        [](const PosteriorFit& f, const ODDataset& data) {
            const CriteriaReport r = criteria(f.chains, data, f.spec);
            py::dict d;
            d["dic_marginal"] = r.dic_marginal;
            d["pd_marginal"] = r.pd_marginal;
            d["mean_deviance"] = r.mean_deviance;
            d["aic"] = r.aic;
            d["bic"] = r.bic;
            return d;
        },
        py::arg("fit"), py::arg("data"));

    m.def(
        "ppc_pvalues",
        [](const PosteriorFit& f, const ODDataset& data, std::size_t draws, std::uint64_t seed) {
            const auto e = predictive_draws(f.chains, data, f.spec.family, {.draws = draws, .seed = seed});
            return ppc_pvalues(e, data).p_values;
        },
        py::arg("fit"), py::arg("data"), py::arg("draws") = 500, py::arg("seed") = 0,
        "p-values of the summed residual, summed squared residual and Poisson deviance");

    m.def("bpr_time", &bpr_time, py::arg("free_flow_time"), py::arg("volume"), py::arg("capacity"),
          py::arg("alpha") = 0.15, py::arg("beta") = 4.0);

    m.def(
        "assign",
        [](const std::vector<std::tuple<int, int, double, double>>& links, int nodes,
           const std::vector<std::tuple<int, int, double>>& trips, double tol, int max_iter) {
            Network net;
            for (int k = 0; k < nodes; ++k) net.add_node(std::to_string(k));
            for (std::size_t l = 0; l < links.size(); ++l) {
                Link link;
                link.id = std::to_string(l);
                std::tie(link.from, link.to, link.free_flow_time, link.capacity) = links[l];
                net.add_link(link);
            }
            ODDemand d;
            for (int k = 0; k < nodes; ++k) d.zone_nodes.push_back(k);
            for (const auto& [o, t, q] : trips) d.trips.push_back({o, t, q});
            const auto r = due_assign(net, d, {.tol = tol, .max_iter = max_iter});
            return py::make_tuple(r.volumes, r.relative_gap, r.iterations);
        },
        py::arg("links"), py::arg("nodes"), py::arg("trips"), py::arg("tol") = 1e-4, py::arg("max_iter") = 200,
        "links as (from, to, free-flow time, capacity); returns (volumes, relative gap, iterations)");

    m.def(
        "run",
        [](const std::string& verb, const std::map<std::string, std::string>& settings) {
            RunConfig c;
            for (const auto& [k, v] : settings) c.set(k, v);
            std::ostringstream out, err;
            int code = 0;
            {
                py::gil_scoped_release release;
                code = run_command(verb, c, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("verb"), py::arg("settings"), "runs a CLI verb; returns (exit code, stdout, stderr)");

    m.attr("__version__") = library_version();
}
