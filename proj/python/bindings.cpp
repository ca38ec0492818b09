#include "slowman/cli.hpp"
#include "slowman/errors.hpp"
#include "slowman/harness.hpp"
#include "slowman/rpm.hpp"
#include "slowman/stability.hpp"

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace slowman;

namespace {

py::dict trace_dict(const IterationTrace& tr) {
    py::dict d;
    d["converged"] = tr.converged;
    d["outcome"] = to_string(tr.outcome);
    d["iterations"] = tr.iterations_used;
    d["tol"] = tr.tol;
    d["output"] = tr.output;
    d["residuals"] = tr.residuals;
    d["iterates"] = tr.iterates;
    d["error_bound"] = tr.error_bound ? py::cast(*tr.error_bound) : py::none();
    d["subspace_dims"] = tr.subspace_dims;
    return d;
}

IterationConfig make_config(const FastSlowSystem& sys, int m, const std::string& mode, double h_over_eps,
                            double hhat_over_eps, double eta, std::optional<double> tol, int max_iters) {
    IterationConfig cfg;
    cfg.m = m;
    const double eps = sys.epsilon();
    if (mode == "analytic")
        cfg.mode = DerivativeMode::analytic(h_over_eps * eps);
    else if (mode == "differenced")
        cfg.mode = DerivativeMode::forward_difference(hhat_over_eps * eps, eta);
    else
        throw ValidationError("mode must be 'analytic' or 'differenced'");
    cfg.tol = tol;
    cfg.max_iters = max_iters;
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Slow-manifold projection by zero-derivative functional iteration.";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());

    py::class_<FastSlowSystem>(m, "FastSlowSystem")
        .def_property_readonly("name", &FastSlowSystem::name)
        .def_property_readonly("n_slow", &FastSlowSystem::n_slow)
        .def_property_readonly("n_fast", &FastSlowSystem::n_fast)
        .def_property_readonly("epsilon", &FastSlowSystem::epsilon)
        .def_property_readonly("parameters", &FastSlowSystem::parameters)
        .def("f", [](const FastSlowSystem& s, const Vector& x, const Vector& y) { return s.f(x, y); })
        .def("g", [](const FastSlowSystem& s, const Vector& x, const Vector& y) { return s.g(x, y); })
        .def("exact_manifold",
             [](const FastSlowSystem& s, const Vector& x) -> py::object {
                 for (auto kind : {ManifoldKind::ExactClosedForm, ManifoldKind::MatrixPowerOracle}) {
                     const auto* ref = s.reference(kind);
                     if (ref && ref->graph) return py::cast(Vector(ref->graph(x)));
                 }
                 return py::none();
             })
        .def("__repr__", [](const FastSlowSystem& s) {
            std::ostringstream os;
            os << "<FastSlowSystem " << s.name() << " eps=" << s.epsilon() << ">";
            return os.str();
        });

    m.def("linear_test", &linear_test, py::arg("a"), py::arg("c"), py::arg("epsilon"));
    m.def("michaelis_menten", &michaelis_menten, py::arg("kappa"), py::arg("lam"), py::arg("epsilon"));
    m.def("complex_pair_test", &complex_pair_test, py::arg("theta"), py::arg("lambda_re"), py::arg("epsilon"),
          py::arg("extra_real") = std::vector<double>{}, py::arg("a") = 0.0);
    m.def("make_system", &make_system, py::arg("id"), py::arg("params"), py::arg("epsilon"));
    m.def("critical_point",
          [](const FastSlowSystem& s, const Vector& x) { return critical_point(s, x); }, py::arg("system"),
          py::arg("x"));

    m.def(
        "project",
        [](const FastSlowSystem& s, const Vector& x0, const Vector& y_seed, int m_, const std::string& mode,
           double h, double hhat, double eta, std::optional<double> tol, int max_iters) {
            return trace_dict(project(s, make_config(s, m_, mode, h, hhat, eta, tol, max_iters), x0, y_seed));
        },
        py::arg("system"), py::arg("x0"), py::arg("y_seed"), py::arg("m") = 0, py::arg("mode") = "analytic",
        py::arg("H_over_eps") = 1.0, py::arg("Hhat_over_eps") = 1.0, py::arg("eta") = 1.0,
        py::arg("tol") = py::none(), py::arg("max_iters") = 10000);

    m.def(
        "rpm_iterate",
        [](const FastSlowSystem& s, const Vector& x0, const Vector& y_seed, int m_, const std::string& mode,
           double h, double hhat, double eta, std::optional<double> tol, int max_iters, double delta,
           int refresh_every, std::optional<int> max_dim) {
            RpmConfig rc;
            rc.delta = delta;
            rc.refresh_every = refresh_every;
            rc.max_dim = max_dim;
            return trace_dict(rpm_iterate(s, make_config(s, m_, mode, h, hhat, eta, tol, max_iters), rc, x0, y_seed));
        },
        py::arg("system"), py::arg("x0"), py::arg("y_seed"), py::arg("m") = 0, py::arg("mode") = "analytic",
        py::arg("H_over_eps") = 1.0, py::arg("Hhat_over_eps") = 1.0, py::arg("eta") = 1.0,
        py::arg("tol") = py::none(), py::arg("max_iters") = 10000, py::arg("delta") = 0.2,
        py::arg("refresh_every") = 5, py::arg("max_dim") = py::none());

    m.def(
        "project_cascade",
        [](const FastSlowSystem& s, const Vector& x0, const Vector& y_seed, int m_max, double h,
           std::optional<double> tol0) {
            IterationConfig base;
            base.mode = DerivativeMode::analytic(h * s.epsilon());
            py::list out;
            for (const auto& tr : project_cascade(s, std::nullopt, base, x0, y_seed, m_max, tol0))
                out.append(trace_dict(tr));
            return out;
        },
        py::arg("system"), py::arg("x0"), py::arg("y_seed"), py::arg("m_max"), py::arg("H_over_eps") = 1.0,
        py::arg("tol0") = py::none());

    m.def("mu",
          [](int m_, double h_over_eps, double modulus, double theta) {
              return mu_scaled(m_, modulus * h_over_eps, theta);
          },
          py::arg("m"), py::arg("H_over_eps"), py::arg("modulus"), py::arg("theta"));
    m.def("mu_hat", &mu_hat, py::arg("m"), py::arg("h_hat_ell"), py::arg("theta"), py::arg("eta") = 1.0);
    m.def("in_sector", &in_sector, py::arg("m"), py::arg("theta"));
    m.def("h_max_over_eps",
          [](int m_, double modulus, double theta) -> std::optional<double> {
              const auto h = h_max(m_, 1.0, EigenMode::from_polar(modulus, theta));
              return h;
          },
          py::arg("m"), py::arg("modulus"), py::arg("theta"));
    m.def("uniform_bound", &uniform_bound, py::arg("m"), py::arg("eta"));
    m.def("boundary_residual", &boundary_residual, py::arg("m"), py::arg("h_hat_ell"), py::arg("theta"),
          py::arg("eta"));

    m.def(
        "raster_region",
        [](int m_, const std::string& mode, double eta, double theta_min, double theta_max, double step_min,
           double step_max, int resolution) {
            RasterSpec spec;
            spec.m = m_;
            spec.mode = mode == "analytic" ? DerivativeVariant::AnalyticRecursive : DerivativeVariant::ForwardDifference;
            spec.eta = eta;
            spec.theta_min = theta_min;
            spec.theta_max = theta_max;
            spec.step_min = step_min;
            spec.step_max = step_max;
            spec.resolution = resolution;
            std::vector<std::tuple<double, double, double, bool>> rows;
            for (const auto& c : raster_region(spec)) rows.emplace_back(c.theta, c.step, c.abs_mu, c.stable);
            return rows;
        },
        py::arg("m"), py::arg("mode"), py::arg("eta"), py::arg("theta_min"), py::arg("theta_max"),
        py::arg("step_min"), py::arg("step_max"), py::arg("resolution"));

    m.def(
        "order_of_accuracy",
        [](const std::string& id, const std::map<std::string, double>& params, const std::vector<double>& epsilons,
           int m_, double x0) {
            SweepSpec spec;
            spec.system_id = id;
            spec.params = params;
            spec.epsilons = epsilons;
            spec.m_values = {m_};
            spec.x0 = Vector::Constant(1, x0);
            const OrderFit fit = order_of_accuracy(spec, m_);
            py::dict d;
            d["slope"] = fit.slope;
            d["intercept"] = fit.intercept;
            d["r_squared"] = fit.r_squared;
            d["errors"] = fit.errors;
            d["skipped"] = fit.skipped;
            return d;
        },
        py::arg("system_id"), py::arg("params"), py::arg("epsilons"), py::arg("m"), py::arg("x0") = 1.0);

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::vector<const char*> argv{"slowman"};
            for (const auto& a : args) argv.push_back(a.c_str());
            std::ostringstream out, err;
            const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"));
}
