#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "psmfl/demo.hpp"
#include "psmfl/errors.hpp"
#include "psmfl/localize.hpp"
#include "psmfl/store.hpp"

namespace fs = std::filesystem;
using namespace psmfl;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitTraining = 3;
// Only used by `locate --fail-on-significant`, so CI can distinguish
// "findings" from operational failures.
constexpr int kExitFindings = 4;

struct CommonOpts {
    double critical_value = kDefaultCriticalValue;
    std::string log_base = "e";
    std::uint64_t seed = 1;
    int jobs = static_cast<int>(std::thread::hardware_concurrency());
};

// Converts the user-facing critical value to natural log. Usage error if the
// result is not negative.
double natural_critical_value(const CommonOpts& opts) {
    const double c =
        opts.log_base == "10" ? opts.critical_value * std::log(10.0) : opts.critical_value;
    if (!(c < 0.0)) {
        throw CLI::ValidationError("--critical-value",
                                   "must be negative after base conversion");
    }
    return c;
}

void add_common_flags(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--critical-value", opts.critical_value,
                    "Significance threshold on the mean log-likelihood delta")
        ->envname("PSMFL_CRITICAL_VALUE");
    cmd->add_option("--log-base", opts.log_base, "Base of --critical-value")
        ->check(CLI::IsMember({"e", "10"}))
        ->envname("PSMFL_LOG_BASE");
    cmd->add_option("--seed", opts.seed, "Random seed")->envname("PSMFL_SEED");
    cmd->add_option("--jobs", opts.jobs, "Parallel model fits")
        ->check(CLI::PositiveNumber)
        ->envname("PSMFL_JOBS");
}

void add_fit_flags(CLI::App* cmd, FitConfig& config) {
    cmd->add_option("--epochs", config.epochs, "Training epochs");
    cmd->add_option("--coupling-layers", config.coupling_layers, "Flow coupling layers");
    cmd->add_option("--hidden-units", config.hidden_units, "Hidden units per net layer");
    cmd->add_option("--learning-rate", config.learning_rate, "Adam learning rate");
    cmd->add_option("--batch-size", config.batch_size, "Training batch size");
    cmd->add_option("--validation-fraction", config.validation_fraction,
                    "Held-out fraction for early stopping and self_ll");
    cmd->add_option("--patience", config.early_stop_patience, "Early-stop patience");
    std::map<std::string, ModelKind> kinds{{"nvp_flow", ModelKind::nvp_flow},
                                           {"gaussian_baseline", ModelKind::gaussian_baseline}};
    cmd->add_option("--model", config.kind, "Multivariate model family")
        ->transform(CLI::CheckedTransformer(kinds, CLI::ignore_case));
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

void write_json(const fs::path& path, const nlohmann::json& doc) {
    write_text(path, doc.dump(2) + "\n");
}

std::string critical_value_line(double c_natural) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "critical value: %.6f (ln), %.6f (log10)", c_natural,
                  c_natural / std::log(10.0));
    return buf;
}

// Fits one bundle per executable, up to `jobs` in parallel. Output maps are
// only touched after all workers join.
std::map<std::string, ModelBundle> fit_all(
    const std::map<std::string, BehavioralDataset>& datasets, const FitConfig& config,
    int jobs) {
    std::vector<const BehavioralDataset*> work;
    for (const auto& [id, ds] : datasets) work.push_back(&ds);
    std::vector<ModelBundle> fitted(work.size());
    std::vector<std::exception_ptr> errors(work.size());
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < work.size(); i = next.fetch_add(1)) {
            try {
                fitted[i] = fit_bundle(*work[i], config);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(work.size())));
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    std::string failures;
    for (std::size_t i = 0; i < work.size(); ++i) {
        if (!errors[i]) continue;
        try {
            std::rethrow_exception(errors[i]);
        } catch (const std::exception& e) {
            failures += work[i]->executable_id + ": " + e.what() + "\n";
        }
    }
    if (!failures.empty()) throw TrainingError("model fitting failed for:\n" + failures);

    std::map<std::string, ModelBundle> models;
    for (std::size_t i = 0; i < work.size(); ++i) {
        models.emplace(work[i]->executable_id, std::move(fitted[i]));
    }
    return models;
}

AssemblyResult load_and_assemble(const std::string& trace_path, ProgramGraph* graph_out) {
    Trace trace = load_trace(trace_path);
    if (graph_out != nullptr) *graph_out = trace.graph;
    AssemblyResult assembled = assemble_datasets(trace.events, trace.graph);
    if (assembled.datasets.empty()) {
        throw DataError(trace_path + ": no complete invocations");
    }
    return assembled;
}

nlohmann::json warnings_to_json(const AssemblyWarnings& warnings) {
    nlohmann::json dropped = nlohmann::json::object();
    for (const auto& [id, count] : warnings.dropped_rows) dropped[id] = count;
    return {{"dropped_rows", dropped},
            {"excluded_executables", warnings.excluded_executables}};
}

int cmd_fit(const std::string& trace_path, const std::string& out_dir,
            const CommonOpts& opts, FitConfig config) {
    config.seed = opts.seed;
    config.validate();
    fs::create_directories(out_dir);

    ProgramGraph graph;
    AssemblyResult assembled = load_and_assemble(trace_path, &graph);
    auto models = fit_all(assembled.datasets, config, opts.jobs);
    save_models((fs::path(out_dir) / "models").string(), graph, models,
                assembled.warnings);

    nlohmann::json summary = nlohmann::json::object();
    summary["warnings"] = warnings_to_json(assembled.warnings);
    nlohmann::json per_model = nlohmann::json::array();
    for (const auto& [id, bundle] : models) {
        const auto& ds = assembled.datasets.at(id);
        per_model.push_back({{"executable", id},
                             {"n", ds.n()},
                             {"d", ds.d()},
                             {"self_ll", bundle.model.self_ll},
                             {"univariate_models", bundle.univariate.size()}});
        std::printf("fit %-28s n=%-6lld d=%-3lld self_ll=%.4f\n", id.c_str(),
                    static_cast<long long>(ds.n()), static_cast<long long>(ds.d()),
                    bundle.model.self_ll);
    }
    summary["models"] = per_model;
    write_json(fs::path(out_dir) / "fit_summary.json", summary);
    return 0;
}

int cmd_locate(const std::string& model_dir, const std::string& trace_path,
               const std::string& out_dir, const CommonOpts& opts,
               bool fail_on_significant) {
    const double c = natural_critical_value(opts);
    fs::create_directories(out_dir);

    LoadedStore store = load_models(model_dir);
    ProgramGraph graph;
    AssemblyResult assembled = load_and_assemble(trace_path, &graph);
    if (graph.hash() != store.graph_hash) {
        throw SchemaError("program graph of " + trace_path +
                          " does not match the model store's manifest; refit before "
                          "localizing");
    }

    LocalizationReport report = localize(store.models, assembled.datasets, c, graph);
    write_json(fs::path(out_dir) / "report.json", report.to_json());
    write_text(fs::path(out_dir) / "report.csv", report.to_csv());

    std::size_t significant = 0;
    for (const auto& r : report.results) significant += r.significant ? 1 : 0;
    std::printf("%s\n", critical_value_line(c).c_str());
    std::printf("%zu significant of %zu tested elements\n", significant,
                report.results.size());
    for (const auto& v : report.verdicts) {
        std::printf("verdict %-28s %s\n", v.executable_id.c_str(),
                    to_string(v.classification));
    }
    if (fail_on_significant && significant > 0) return kExitFindings;
    return 0;
}

int cmd_report(const std::string& report_path, const std::string& out_csv) {
    std::ifstream in(report_path);
    if (!in) throw DataError("cannot read " + report_path);
    LocalizationReport report =
        LocalizationReport::from_json(nlohmann::json::parse(in));
    const std::string csv = report.to_csv();
    if (out_csv.empty()) {
        std::printf("%s", csv.c_str());
    } else {
        write_text(out_csv, csv);
    }
    std::printf("%s\n", critical_value_line(report.critical_value).c_str());
    return 0;
}

int cmd_plot(const std::string& model_dir, const std::string& null_trace,
             const std::string& alt_trace, const std::string& executable,
             const std::string& element, const std::string& out_dir) {
    fs::create_directories(out_dir);
    LoadedStore store = load_models(model_dir);
    ProgramGraph graph;
    AssemblyResult null_data = load_and_assemble(null_trace, &graph);
    AssemblyResult alt_data;
    if (!alt_trace.empty()) alt_data = load_and_assemble(alt_trace, nullptr);

    auto it = null_data.datasets.find(executable);
    if (it == null_data.datasets.end()) {
        throw SchemaError("executable " + executable + " not present in " + null_trace);
    }
    const BehavioralDataset& null_ds = it->second;
    const BehavioralDataset* alt_ds = nullptr;
    if (auto alt_it = alt_data.datasets.find(executable); alt_it != alt_data.datasets.end()) {
        alt_ds = &alt_it->second;
    }
    const ModelBundle* bundle = nullptr;
    if (auto m = store.models.find(executable); m != store.models.end()) bundle = &m->second;

    int written = 0;
    for (const auto& ref : null_ds.columns) {
        if (!element.empty() && ref.element_id != element) continue;
        auto doc = export_plot_data(bundle, &null_ds, alt_ds, ref);
        const std::string name =
            sanitize_id(executable) + "." + sanitize_id(ref.element_id) + ".plot.json";
        write_json(fs::path(out_dir) / name, doc);
        ++written;
    }
    if (written == 0) {
        throw SchemaError("element " + element + " not declared for " + executable);
    }
    std::printf("wrote %d plot document(s) to %s\n", written, out_dir.c_str());
    return 0;
}

int cmd_demo(const std::string& out_dir, const CommonOpts& opts, int request_count,
             FitConfig config) {
    const double c = natural_critical_value(opts);
    config.seed = opts.seed;
    config.validate();
    fs::create_directories(out_dir);

    StudyArtifacts study = reproduce_study(opts.seed, c, request_count, config);

    WorkloadConfig workload;
    workload.request_count = request_count;
    workload.seed = opts.seed;
    run_workload(workload, FaultId::none, (fs::path(out_dir) / "null.trace").string());
    WorkloadConfig regression_workload = workload;
    regression_workload.seed = opts.seed + 1000003;
    run_workload(regression_workload, FaultId::regression_negated_weight,
                 (fs::path(out_dir) / "regression.trace").string());
    WorkloadConfig integration_workload = workload;
    integration_workload.seed = opts.seed + 2000003;
    run_workload(integration_workload, FaultId::integration_inches_bmi,
                 (fs::path(out_dir) / "integration.trace").string());

    save_models((fs::path(out_dir) / "models").string(), study.graph, study.models,
                study.fit_warnings);
    write_json(fs::path(out_dir) / "regression_report.json", study.regression.to_json());
    write_text(fs::path(out_dir) / "regression_report.csv", study.regression.to_csv());
    write_json(fs::path(out_dir) / "integration_report.json", study.integration.to_json());
    write_text(fs::path(out_dir) / "integration_report.csv", study.integration.to_csv());

    // Comparison panels for the elements featured in the study discussion.
    auto null_assembled =
        assemble_datasets(run_workload(workload, FaultId::none), study.graph);
    auto regression_assembled = assemble_datasets(
        run_workload(regression_workload, FaultId::regression_negated_weight), study.graph);
    const fs::path plot_dir = fs::path(out_dir) / "plots";
    fs::create_directories(plot_dir);
    for (const std::string exec : {"Person.init", "NutritionAdvisor.advice"}) {
        const auto& null_ds = null_assembled.datasets.at(exec);
        const auto& alt_ds = regression_assembled.datasets.at(exec);
        const ModelBundle& bundle = study.models.at(exec);
        for (const auto& ref : null_ds.columns) {
            auto doc = export_plot_data(&bundle, &null_ds, &alt_ds, ref);
            write_json(plot_dir / (sanitize_id(exec) + "." + sanitize_id(ref.element_id) +
                                   ".plot.json"),
                       doc);
        }
    }

    std::printf("%s\n", critical_value_line(c).c_str());
    for (const auto* rep : {&study.regression, &study.integration}) {
        std::size_t significant = 0;
        for (const auto& r : rep->results) significant += r.significant ? 1 : 0;
        std::printf("%s fault: %zu significant of %zu elements\n",
                    rep == &study.regression ? "regression " : "integration",
                    significant, rep->results.size());
    }
    std::printf("artifacts written to %s\n", out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Probabilistic fault localization from runtime traces"};
    app.require_subcommand(1);

    CommonOpts opts;
    FitConfig fit_config;

    std::string trace_path, model_dir, out_dir = "out", report_path, out_csv;
    std::string alt_trace, executable, element;
    bool fail_on_significant = false;
    int request_count = 3000;

    auto* fit = app.add_subcommand("fit", "Fit per-executable models from a null trace");
    fit->add_option("trace", trace_path, "Null-version trace file")->required();
    fit->add_option("-o,--out", out_dir, "Output directory");
    add_common_flags(fit, opts);
    add_fit_flags(fit, fit_config);

    auto* locate = app.add_subcommand("locate", "Evaluate an alt trace against fitted models");
    locate->add_option("models", model_dir, "Model store directory")->required();
    locate->add_option("trace", trace_path, "Alt-version trace file")->required();
    locate->add_option("-o,--out", out_dir, "Output directory");
    locate->add_flag("--fail-on-significant", fail_on_significant,
                     "Exit nonzero when any element is significant");
    add_common_flags(locate, opts);

    auto* report = app.add_subcommand("report", "Render a report JSON as CSV");
    report->add_option("report", report_path, "report.json path")->required();
    report->add_option("-o,--out", out_csv, "CSV output path (default: stdout)");

    auto* plot = app.add_subcommand("plot", "Export comparison-plot documents");
    plot->add_option("models", model_dir, "Model store directory")->required();
    plot->add_option("null_trace", trace_path, "Null-version trace file")->required();
    plot->add_option("--alt-trace", alt_trace, "Alt-version trace file");
    plot->add_option("--executable", executable, "Executable to plot")->required();
    plot->add_option("--element", element, "Single element (default: all)");
    plot->add_option("-o,--out", out_dir, "Output directory");

    auto* demo = app.add_subcommand("demo", "Reproduce the two-fault BMI study end to end");
    demo->add_option("-o,--out", out_dir, "Output directory");
    demo->add_option("--requests", request_count, "Requests per workload")
        ->check(CLI::PositiveNumber);
    add_common_flags(demo, opts);
    add_fit_flags(demo, fit_config);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (fit->parsed()) return cmd_fit(trace_path, out_dir, opts, fit_config);
        if (locate->parsed()) {
            return cmd_locate(model_dir, trace_path, out_dir, opts, fail_on_significant);
        }
        if (report->parsed()) return cmd_report(report_path, out_csv);
        if (plot->parsed()) {
            return cmd_plot(model_dir, trace_path, alt_trace, executable, element, out_dir);
        }
        if (demo->parsed()) return cmd_demo(out_dir, opts, request_count, fit_config);
    } catch (const CLI::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const TrainingError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitTraining;
    } catch (const DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }
    return kExitUsage;
}
