#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "homoglab/config.hpp"
#include "homoglab/envelope.hpp"
#include "homoglab/environment.hpp"
#include "homoglab/error.hpp"
#include "homoglab/homogenize.hpp"
#include "homoglab/mu.hpp"
#include "homoglab/run.hpp"

namespace py = pybind11;
using namespace homoglab;

namespace {

using EnsemblePtr = std::shared_ptr<TileEnsemble>;

ExperimentOptions experiment_options(int per_unit, int workers) {
    ExperimentOptions o;
    o.mu.per_unit = per_unit;
    o.workers = workers;
    return o;
}

py::dict stats_dict(const SampleStats& s) {
    py::dict d;
    d["n"] = s.n;
    d["mean"] = s.mean;
    d["m2"] = s.m2;
    d["variance"] = s.variance;
    d["se_mean"] = s.se_mean;
    d["se_m2"] = s.se_m2;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Bindings for the homoglab C++ library";
    m.attr("__version__") = HOMOGLAB_VERSION;

    auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<InvalidInput>(m, "InvalidInput", base);
    py::register_exception<ValidationError>(m, "ValidationError", base);
    auto nonconv = py::register_exception<NonConvergence>(m, "NonConvergence", base);
    py::register_exception<PartialFailure>(m, "PartialFailure", nonconv);
    py::register_exception<BracketError>(m, "BracketError", base);
    py::register_exception<StencilError>(m, "StencilError", base);
    py::register_exception<FormatError>(m, "FormatError", base);
    py::register_exception<OutOfWindow>(m, "OutOfWindow", base);

    py::class_<SymMatrix>(m, "SymMatrix")
        .def(py::init([](const std::vector<double>& upper) {
                 const int dim = upper.size() == 3 ? 2 : upper.size() == 6 ? 3 : upper.size() == 1 ? 1 : 0;
                 if (!dim) throw InvalidInput("SymMatrix: give the upper triangle (1, 3 or 6 entries)");
                 return SymMatrix::from_upper(dim, upper);
             }),
             py::arg("upper"))
        .def_static("identity", &SymMatrix::identity, py::arg("dim") = 2, py::arg("scale") = 1.0)
        .def_property_readonly("dim", &SymMatrix::dim)
        .def_property_readonly("upper", &SymMatrix::upper)
        .def("__call__", &SymMatrix::operator())
        .def("trace", &SymMatrix::trace)
        .def("det", &SymMatrix::det)
        .def("__repr__", &SymMatrix::to_string);

    py::class_<LocalOperator>(m, "LocalOperator")
        .def_static("linear", &LocalOperator::linear, py::arg("a"), py::arg("c"), py::arg("lambda_") = 4.0)
        .def_static(
            "parse", [](const std::string& text, double lambda) { return parse_tile(text, lambda); }, py::arg("text"),
            py::arg("lambda_") = 4.0)
        .def("__call__", &LocalOperator::operator())
        .def_property_readonly("lambda_", &LocalOperator::lambda)
        .def("__repr__", &LocalOperator::describe);

    py::class_<TileEnsemble, EnsemblePtr>(m, "TileEnsemble")
        .def(py::init<std::vector<LocalOperator>, std::vector<double>, double, double>(), py::arg("tiles"),
             py::arg("probs"), py::arg("lambda_") = 4.0, py::arg("k0") = 4.0)
        .def_static(
            "checkerboard", [](double c) { return std::make_shared<TileEnsemble>(TileEnsemble::checkerboard(c)); },
            py::arg("c") = 0.0)
        .def_static(
            "single",
            [](const LocalOperator& op, double lambda, double k0) {
                return std::make_shared<TileEnsemble>(TileEnsemble::single(op, lambda, k0));
            },
            py::arg("op"), py::arg("lambda_") = 4.0, py::arg("k0") = 4.0)
        .def_property_readonly("probs", &TileEnsemble::probs)
        .def_property_readonly("lambda_", &TileEnsemble::lambda)
        .def_property_readonly("deterministic", &TileEnsemble::deterministic)
        .def("__len__", &TileEnsemble::size);

    m.def(
        "subdiff_measure",
        [](const std::vector<double>& values, int n, double x0, double y0, double side) {
            const Box box{x0, y0, side};
            return subdiff_measure(GridFunction(box, n, values), Rect::of(box));
        },
        py::arg("values"), py::arg("n"), py::arg("x0") = -0.5, py::arg("y0") = -0.5, py::arg("side") = 1.0,
        "Envelope subdifferential measure of nodal values (row-major, n x n) over the whole box.");

    m.def(
        "mu_constant_coeff", [](const LocalOperator& op) { return mu_constant_coeff(op).value; }, py::arg("op"));

    m.def(
        "mu_estimate",
        [](const EnsemblePtr& ens, std::uint64_t seed, std::uint64_t k, int level, int per_unit, bool star, double s) {
            const auto real = std::make_shared<const Realization>(experiment_realization(ens, level, seed, k));
            auto field = field_of(real);
            if (star) field = field.star();
            MuConfig cfg;
            cfg.per_unit = per_unit;
            cfg.optimize = false;
            return mu_estimate(field.shift(s), TriadicCube{level, {0, 0}}, cfg).value;
        },
        py::arg("ensemble"), py::arg("seed"), py::arg("realization") = 0, py::arg("m") = 0, py::arg("per_unit") = 9,
        py::arg("star") = false, py::arg("s") = 0.0,
        "mu (or mu_*) of the shifted field on Q_m(0) for one realization.");

    m.def(
        "balance_constant",
        [](const EnsemblePtr& ens, const SymMatrix& a, int level, int n, double tol, std::uint64_t seed, int per_unit,
           int workers) {
            const auto r = balance_constant(ens, a, level, n, tol, seed, experiment_options(per_unit, workers));
            py::dict d;
            d["s_hat"] = r.s_hat;
            d["se"] = r.se;
            d["ci"] = py::make_tuple(r.ci_low, r.ci_high);
            d["failures"] = r.failures;
            return d;
        },
        py::arg("ensemble"), py::arg("a"), py::arg("m"), py::arg("n"), py::arg("tol") = 1e-3, py::arg("seed") = 0,
        py::arg("per_unit") = 3, py::arg("workers") = 1);

    m.def(
        "effective_from_cell",
        [](const EnsemblePtr& ens, const SymMatrix& a, const std::vector<double>& deltas, int tiles, int n,
           std::uint64_t seed, int per_unit, int workers) {
            const auto r = effective_from_cell(ens, a, deltas, tiles, n, seed, per_unit, workers);
            py::dict d;
            d["value"] = r.value;
            d["se"] = r.se;
            d["ci"] = py::make_tuple(r.ci_low, r.ci_high);
            d["samples"] = r.samples;
            d["schedule_means"] = r.schedule_means;
            return d;
        },
        py::arg("ensemble"), py::arg("a"), py::arg("deltas"), py::arg("tiles"), py::arg("n"), py::arg("seed") = 0,
        py::arg("per_unit") = 3, py::arg("workers") = 1);

    m.def(
        "variance_decay",
        [](const EnsemblePtr& ens, const SymMatrix& a, const std::vector<int>& ms, int n, double s_hat,
           std::uint64_t seed, int per_unit, int workers) {
            const auto r =
                variance_decay_experiment(ens, a, ms, n, s_hat, seed, experiment_options(per_unit, workers));
            py::list rows;
            for (const auto& row : r.rows) {
                py::dict d;
                d["m"] = row.m;
                d["mu"] = stats_dict(row.mu);
                d["mustar"] = stats_dict(row.mustar);
                d["sum_sq"] = stats_dict(row.sum_sq);
                rows.append(d);
            }
            py::dict d;
            d["rows"] = rows;
            d["tau_hat"] = r.tau_hat;
            d["monotonicity_z"] = r.monotonicity_z;
            return d;
        },
        py::arg("ensemble"), py::arg("a"), py::arg("ms"), py::arg("n"), py::arg("s_hat"), py::arg("seed") = 0,
        py::arg("per_unit") = 3, py::arg("workers") = 1);

    m.def(
        "error_rate",
        [](const EnsemblePtr& ens, const std::vector<double>& eps, int n, std::uint64_t seed,
           const LocalOperator& effective, double f, int points_per_cell, int workers) {
            const auto r = error_rate_experiment(ens, Box{-0.5, -0.5, 1.0}, f, BoundaryData::zero(), eps, n, seed,
                                                 effective, points_per_cell, workers);
            py::list medians;
            for (const auto& row : r.rows) medians.append(row.median);
            py::dict d;
            d["medians"] = medians;
            d["alpha_hat"] = r.alpha_hat;
            return d;
        },
        py::arg("ensemble"), py::arg("eps"), py::arg("n"), py::arg("seed"), py::arg("effective"), py::arg("f") = 1.0,
        py::arg("points_per_cell") = 9, py::arg("workers") = 1,
        "Sup-norm homogenization gaps on Q_0 with zero boundary data.");

    m.def(
        "run",
        [](const std::string& config_text, const std::filesystem::path& out, bool force) {
            RunOptions opt;
            opt.out = out;
            opt.force = force;
            const auto rec = run(parse_config(config_text), opt);
            py::dict d;
            d["id"] = rec.id;
            d["kind"] = rec.kind;
            d["status"] = rec.status;
            d["outputs"] = rec.outputs;
            return d;
        },
        py::arg("config"), py::arg("out"), py::arg("force") = false,
        "Run an experiment from configuration text, writing outputs to `out`.");

    m.def(
        "run_id", [](const std::string& config_text) { return parse_config(config_text).run_id(); },
        py::arg("config"));

    m.def(
        "selftest",
        [](const std::string& inject) {
            SelftestOptions opt;
            opt.inject = inject;
            const auto r = selftest(opt);
            return py::make_tuple(r.pass(), r.to_text());
        },
        py::arg("inject") = "");
}
