#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psmfl/localize.hpp"
#include "psmfl/trace.hpp"

namespace psmfl {

enum class FaultId { none, regression_negated_weight, integration_inches_bmi };

const char* to_string(FaultId fault);
FaultId fault_from_string(const std::string& s);

// Advice codes derived from WHO BMI cut-offs.
enum AdviceCode : int {
    kAdviceUnderweight = 0,
    kAdviceHealthy = 1,
    kAdviceOverweight = 2,
    kAdviceObese = 3,
};
int advice_code_for_bmi(double bmi);

// BMI of the null program (height in centimeters) and of the integration
// fault, which converts the height to inches instead of meters.
double bmi_meters(double height_cm, double weight_kg);
double bmi_inches(double height_cm, double weight_kg);

struct GenderDistribution {
    double mean_height = 162.0;
    double sd_height = 7.0;
    double mean_weight = 74.0;
    double sd_weight = 17.0;
    double correlation = 0.4;
};

struct WorkloadConfig {
    int request_count = 3000;
    std::uint64_t seed = 1;
    GenderDistribution gender0{162.0, 7.0, 74.0, 17.0, 0.4};
    GenderDistribution gender1{175.0, 7.5, 86.0, 18.0, 0.4};
    double min_height = 120.0, max_height = 220.0;
    double min_weight = 30.0, max_weight = 250.0;

    void validate() const;
};

// The four executables and call edges of the Nutrition Advisor.
ProgramGraph nutrition_advisor_graph();

// Simulates request_count requests through
// Servlet.handle -> Person.init -> NutritionAdvisor.advice -> BmiService.bmi
// with the given fault seeded, emitting every observable element as events.
std::vector<RuntimeEvent> run_workload(const WorkloadConfig& config, FaultId fault);
void run_workload(const WorkloadConfig& config, FaultId fault, const std::string& out_path);

struct StudyArtifacts {
    ProgramGraph graph;
    std::map<std::string, ModelBundle> models;
    AssemblyWarnings fit_warnings;
    LocalizationReport regression;
    LocalizationReport integration;
};

// Full preliminary-study pipeline: null workload, model fitting, both fault
// workloads, localization. Deterministic given seed.
StudyArtifacts reproduce_study(std::uint64_t seed, double critical_value,
                               int request_count = 3000, FitConfig base_config = {});

}  // namespace psmfl
