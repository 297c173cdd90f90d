#include "multippi/io.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace multippi;

namespace {

/// Rows of one batch per subset string; counts and weights come from the plan.
std::string estimate_with_plan(const std::map<std::string, Matrix>& batches, const std::string& plan_json, double alpha) {
    const auto plan = plan_from_json(Json::parse(plan_json));
    std::vector<SampleBatch> list;
    for (const auto& [key, rows] : batches) list.push_back({Subset::parse(key), rows});
    const auto report = confidence_interval(list, plan.family, plan.rounded, plan.weights, alpha);
    return to_json(report).dump();
}

std::string simulate(const std::string& config_json, const std::string& base_dir) {
    const auto cfg = experiment_from_json(Json::parse(config_json), base_dir);
    std::ostringstream out;
    write_metrics_csv(out, run_grid(cfg));
    return out.str();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Budget-optimal allocation and estimation across subsets of predictors";

    static py::handle error_type = py::exception<Error>(m, "MultippiError", PyExc_ValueError).release();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object err = py::reinterpret_borrow<py::object>(error_type)(std::string(to_string(e.code())) + ": " + e.detail());
            err.attr("code") = std::string(to_string(e.code()));
            err.attr("detail") = e.detail();
            PyErr_SetObject(error_type.ptr(), err.ptr());
        } catch (const nlohmann::json::exception& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        }
    });

    m.def(
        "covariance",
        [](const Matrix& samples, const std::string& method) {
            return estimate_covariance(samples, parse_covariance_method(method)).matrix();
        },
        py::arg("samples"), py::arg("method") = "ledoit_wolf");

    m.def(
        "ledoit_wolf",
        [](const Matrix& samples) {
            const auto r = ledoit_wolf(samples);
            return py::make_tuple(r.sigma_lw.matrix(), r.shrinkage);
        },
        py::arg("samples"));

    m.def(
        "allocate",
        [](const Matrix& sigma, const std::string& cost_model_json, std::optional<Vector> target) {
            const CovarianceMatrix s(sigma);
            const auto cm = cost_model_from_json(Json::parse(cost_model_json));
            const TargetSpec t = target ? TargetSpec(*target) : TargetSpec::unit(s.k(), 1);
            return to_json(solve_allocation(s, t, cm)).dump();
        },
        py::arg("sigma"), py::arg("cost_model_json"), py::arg("target") = py::none());

    m.def("estimate", &estimate_with_plan, py::arg("batches"), py::arg("plan_json"), py::arg("alpha") = 0.05);

    m.def("simulate", &simulate, py::arg("config_json"), py::arg("base_dir") = "");

    m.def(
        "cost_additive", [](const std::vector<double>& costs) { return to_json(cost_additive(costs)).dump(); },
        py::arg("per_model_costs"));
    m.def(
        "cost_cascading",
        [](double input_rate, double output_rate, const std::vector<double>& tiers) {
            return to_json(cost_cascading(input_rate, output_rate, tiers)).dump();
        },
        py::arg("input_rate"), py::arg("output_rate"), py::arg("tiers"));

    m.def("normal_quantile", &normal_quantile, py::arg("p"));
}
