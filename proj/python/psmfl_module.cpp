#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "psmfl/demo.hpp"
#include "psmfl/errors.hpp"
#include "psmfl/localize.hpp"
#include "psmfl/store.hpp"

namespace py = pybind11;
using namespace psmfl;

namespace {

FitConfig make_fit_config(int epochs, std::uint64_t seed, const std::string& kind) {
    FitConfig config;
    config.epochs = epochs;
    config.seed = seed;
    config.kind = model_kind_from_string(kind);
    config.validate();
    return config;
}

// Fits per-executable models from a trace file and persists them.
py::dict fit_models(const std::string& trace_path, const std::string& store_dir,
                    int epochs, std::uint64_t seed, const std::string& model) {
    Trace trace = load_trace(trace_path);
    AssemblyResult assembled = assemble_datasets(trace.events, trace.graph);
    if (assembled.datasets.empty()) {
        throw DataError(trace_path + ": no complete invocations");
    }
    FitConfig config = make_fit_config(epochs, seed, model);
    std::map<std::string, ModelBundle> models;
    py::dict summary;
    for (const auto& [id, ds] : assembled.datasets) {
        auto bundle = fit_bundle(ds, config);
        py::dict entry;
        entry["n"] = ds.n();
        entry["d"] = ds.d();
        entry["self_ll"] = bundle.model.self_ll;
        summary[py::str(id)] = entry;
        models.emplace(id, std::move(bundle));
    }
    save_models(store_dir, trace.graph, models, assembled.warnings);
    return summary;
}

// Evaluates an alt trace against a persisted store; returns the report JSON
// as a string (parse with the json module).
std::string localize_trace(const std::string& store_dir, const std::string& trace_path,
                           double critical_value) {
    LoadedStore store = load_models(store_dir);
    Trace trace = load_trace(trace_path);
    if (trace.graph.hash() != store.graph_hash) {
        throw SchemaError("program graph of " + trace_path +
                          " does not match the model store");
    }
    AssemblyResult assembled = assemble_datasets(trace.events, trace.graph);
    auto report = localize(store.models, assembled.datasets, critical_value, trace.graph);
    return report.to_json().dump();
}

void write_demo_workload(const std::string& out_path, int requests, std::uint64_t seed,
                         const std::string& fault) {
    WorkloadConfig config;
    config.request_count = requests;
    config.seed = seed;
    run_workload(config, fault_from_string(fault), out_path);
}

py::dict run_study(std::uint64_t seed, double critical_value, int requests) {
    StudyArtifacts study = reproduce_study(seed, critical_value, requests);
    py::dict out;
    out["regression_csv"] = study.regression.to_csv();
    out["integration_csv"] = study.integration.to_csv();
    out["regression_json"] = study.regression.to_json().dump();
    out["integration_json"] = study.integration.to_json().dump();
    return out;
}

}  // namespace

PYBIND11_MODULE(_psmfl, m) {
    m.doc() = "Probabilistic fault localization from runtime traces";

    m.attr("DEFAULT_CRITICAL_VALUE") = kDefaultCriticalValue;

    m.def("significance_test", &significance_test, py::arg("ll_alt"), py::arg("ll_null"),
          py::arg("critical_value") = kDefaultCriticalValue,
          "Mean log-likelihood drop test: (ll_alt - ll_null) < c, strict.");
    m.def("bmi_meters", &bmi_meters, py::arg("height_cm"), py::arg("weight_kg"));
    m.def("advice_code_for_bmi", &advice_code_for_bmi, py::arg("bmi"));
    m.def("write_demo_workload", &write_demo_workload, py::arg("out_path"),
          py::arg("requests") = 3000, py::arg("seed") = 1, py::arg("fault") = "none",
          "Writes a Nutrition Advisor trace file with the given fault seeded.");
    m.def("fit_models", &fit_models, py::arg("trace_path"), py::arg("store_dir"),
          py::arg("epochs") = 60, py::arg("seed") = 1, py::arg("model") = "nvp_flow",
          "Fits one model bundle per executable and persists them; returns a summary.");
    m.def("localize_trace", &localize_trace, py::arg("store_dir"), py::arg("trace_path"),
          py::arg("critical_value") = kDefaultCriticalValue,
          "Returns the localization report as a JSON string.");
    m.def("run_study", &run_study, py::arg("seed") = 1,
          py::arg("critical_value") = kDefaultCriticalValue, py::arg("requests") = 3000,
          "Runs the full two-fault study; returns report CSV/JSON strings.");

    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);
}
