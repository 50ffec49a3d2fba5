#include "psmfl/demo.hpp"

#include <cmath>
#include <random>

#include "psmfl/dataset.hpp"
#include "psmfl/errors.hpp"

namespace psmfl {

const char* to_string(FaultId fault) {
    switch (fault) {
        case FaultId::none: return "none";
        case FaultId::regression_negated_weight: return "regression_negated_weight";
        case FaultId::integration_inches_bmi: return "integration_inches_bmi";
    }
    return "?";
}

FaultId fault_from_string(const std::string& s) {
    if (s == "none") return FaultId::none;
    if (s == "regression_negated_weight") return FaultId::regression_negated_weight;
    if (s == "integration_inches_bmi") return FaultId::integration_inches_bmi;
    throw DataError("unknown fault id: " + s);
}

int advice_code_for_bmi(double bmi) {
    if (bmi < 18.5) return kAdviceUnderweight;
    if (bmi < 25.0) return kAdviceHealthy;
    if (bmi < 30.0) return kAdviceOverweight;
    return kAdviceObese;
}

double bmi_meters(double height_cm, double weight_kg) {
    const double m = height_cm / 100.0;
    return weight_kg / (m * m);
}

double bmi_inches(double height_cm, double weight_kg) {
    const double in = height_cm / 2.54;
    return weight_kg / (in * in);
}

void WorkloadConfig::validate() const {
    if (request_count < 1) throw DataError("request count must be >= 1");
    for (const auto& g : {gender0, gender1}) {
        if (!(g.sd_height > 0) || !(g.sd_weight > 0)) {
            throw DataError("workload standard deviations must be positive");
        }
        if (!(g.correlation > -1.0 && g.correlation < 1.0)) {
            throw DataError("workload correlation must be in (-1, 1)");
        }
    }
}

namespace {

const char* kServlet = "Servlet.handle";
const char* kInit = "Person.init";
const char* kAdvice = "NutritionAdvisor.advice";
const char* kBmi = "BmiService.bmi";

}  // namespace

ProgramGraph nutrition_advisor_graph() {
    ProgramGraph graph;
    for (const char* exec : {kServlet, kInit, kAdvice, kBmi}) {
        graph.add_executable(exec);
    }
    auto add = [&graph](const char* exec, const char* elem, Role role,
                        ValueKind kind = ValueKind::continuous,
                        std::optional<int> card = std::nullopt,
                        std::map<std::string, int> codes = {}) {
        CodeElementRef ref;
        ref.executable_id = exec;
        ref.element_id = elem;
        ref.role = role;
        ref.value_kind = kind;
        ref.cardinality = card;
        ref.code_table = std::move(codes);
        graph.add_element(std::move(ref));
    };

    // Servlet.handle: what it feeds into the Person constructor.
    add(kServlet, "init.height", Role::invocation_arg);
    add(kServlet, "init.weight", Role::invocation_arg);
    add(kServlet, "init.gender", Role::invocation_arg, ValueKind::discrete, 2,
        {{"female", 0}, {"male", 1}});

    add(kInit, "init.height", Role::parameter);
    add(kInit, "init.weight", Role::parameter);
    add(kInit, "init.gender", Role::parameter, ValueKind::discrete, 2,
        {{"female", 0}, {"male", 1}});
    add(kInit, "Person.height", Role::property_write);
    add(kInit, "Person.weight", Role::property_write);
    add(kInit, "Person.gender", Role::property_write, ValueKind::discrete, 2,
        {{"female", 0}, {"male", 1}});

    add(kAdvice, "Person.height", Role::property_read);
    add(kAdvice, "Person.weight", Role::property_read);
    add(kAdvice, "bmi.height", Role::invocation_arg);
    add(kAdvice, "bmi.weight", Role::invocation_arg);
    add(kAdvice, "bmi.return", Role::invocation_return);
    add(kAdvice, "advice.return", Role::return_value, ValueKind::discrete, 4,
        {{"underweight", 0}, {"healthy", 1}, {"overweight", 2}, {"obese", 3}});

    add(kBmi, "bmi.height", Role::parameter);
    add(kBmi, "bmi.weight", Role::parameter);
    add(kBmi, "bmi.return", Role::return_value);

    graph.add_edge(kServlet, kInit);
    graph.add_edge(kServlet, kAdvice);
    graph.add_edge(kAdvice, kBmi);
    graph.add_edge(kAdvice, kInit);
    graph.validate();
    return graph;
}

std::vector<RuntimeEvent> run_workload(const WorkloadConfig& config, FaultId fault) {
    config.validate();
    std::mt19937_64 rng(config.seed);
    std::bernoulli_distribution gender_dist(0.5);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<RuntimeEvent> events;
    events.reserve(static_cast<std::size_t>(config.request_count) * 18);
    std::uint64_t sequence_no = 0;
    auto emit = [&events, &sequence_no](const char* exec, const char* elem,
                                        std::uint64_t invocation, double value) {
        events.push_back({exec, elem, invocation, value, sequence_no++});
    };

    for (int r = 0; r < config.request_count; ++r) {
        const auto invocation = static_cast<std::uint64_t>(r);
        const bool male = gender_dist(rng);
        const GenderDistribution& g = male ? config.gender1 : config.gender0;
        double height = 0.0, weight = 0.0;
        do {
            const double z1 = normal(rng);
            const double z2 = normal(rng);
            height = g.mean_height + g.sd_height * z1;
            weight = g.mean_weight +
                     g.sd_weight * (g.correlation * z1 +
                                    std::sqrt(1.0 - g.correlation * g.correlation) * z2);
        } while (height < config.min_height || height > config.max_height ||
                 weight < config.min_weight || weight > config.max_weight);
        const double gender = male ? 1.0 : 0.0;

        // Servlet.handle invokes the Person constructor.
        emit(kServlet, "init.height", invocation, height);
        emit(kServlet, "init.weight", invocation, weight);
        emit(kServlet, "init.gender", invocation, gender);

        // Person.init; the regression fault negates the stored weight.
        emit(kInit, "init.height", invocation, height);
        emit(kInit, "init.weight", invocation, weight);
        emit(kInit, "init.gender", invocation, gender);
        const double stored_weight =
            fault == FaultId::regression_negated_weight ? -weight : weight;
        emit(kInit, "Person.height", invocation, height);
        emit(kInit, "Person.weight", invocation, stored_weight);
        emit(kInit, "Person.gender", invocation, gender);

        // NutritionAdvisor.advice reads the person and calls BmiService.bmi.
        emit(kAdvice, "Person.height", invocation, height);
        emit(kAdvice, "Person.weight", invocation, stored_weight);
        emit(kAdvice, "bmi.height", invocation, height);
        emit(kAdvice, "bmi.weight", invocation, stored_weight);

        emit(kBmi, "bmi.height", invocation, height);
        emit(kBmi, "bmi.weight", invocation, stored_weight);
        const double bmi = fault == FaultId::integration_inches_bmi
                               ? bmi_inches(height, stored_weight)
                               : bmi_meters(height, stored_weight);
        emit(kBmi, "bmi.return", invocation, bmi);

        emit(kAdvice, "bmi.return", invocation, bmi);
        emit(kAdvice, "advice.return", invocation, advice_code_for_bmi(bmi));
    }
    return events;
}

void run_workload(const WorkloadConfig& config, FaultId fault,
                  const std::string& out_path) {
    write_trace(out_path, nutrition_advisor_graph(), run_workload(config, fault));
}

StudyArtifacts reproduce_study(std::uint64_t seed, double critical_value,
                               int request_count, FitConfig base_config) {
    StudyArtifacts artifacts;
    artifacts.graph = nutrition_advisor_graph();

    WorkloadConfig null_config;
    null_config.request_count = request_count;
    null_config.seed = seed;
    auto null_events = run_workload(null_config, FaultId::none);
    auto null_assembly = assemble_datasets(null_events, artifacts.graph);
    artifacts.fit_warnings = null_assembly.warnings;

    FitConfig fit_config = base_config;
    fit_config.seed = seed;
    for (const auto& [exec_id, dataset] : null_assembly.datasets) {
        artifacts.models.emplace(exec_id, fit_bundle(dataset, fit_config));
    }

    auto localize_fault = [&](FaultId fault, std::uint64_t alt_seed) {
        WorkloadConfig alt_config = null_config;
        alt_config.seed = alt_seed;
        auto alt_events = run_workload(alt_config, fault);
        auto alt_assembly = assemble_datasets(alt_events, artifacts.graph);
        return localize(artifacts.models, alt_assembly.datasets, critical_value,
                        artifacts.graph);
    };
    artifacts.regression =
        localize_fault(FaultId::regression_negated_weight, seed + 1000003);
    artifacts.integration =
        localize_fault(FaultId::integration_inches_bmi, seed + 2000003);
    return artifacts;
}

}  // namespace psmfl
