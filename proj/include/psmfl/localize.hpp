#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "psmfl/density.hpp"
#include "psmfl/univariate.hpp"

namespace psmfl {

// Default critical value: natural-log equivalent of a 1-in-1000
// false-positive rate, ln(0.001).
inline constexpr double kDefaultCriticalValue = -6.907755278982137;

enum class ResultCardinality { multivariate, univariate };

struct LikelihoodResult {
    std::string executable_id;
    std::optional<std::string> element_id;  // absent for the multivariate row
    ResultCardinality cardinality = ResultCardinality::multivariate;
    Role role = Role::parameter;  // meaningful only for univariate rows
    double ll_alt = 0.0;
    double ll_null = 0.0;
    double delta = 0.0;
    double critical_value = kDefaultCriticalValue;
    bool significant = false;
    std::size_t n_alt = 0;
    // n_alt below the minimum; significance is suppressed, not asserted.
    bool insufficient_evidence = false;
    bool degenerate = false;  // model flagged the column as near-constant
};

enum class Verdict { root_cause_candidate, symptom, unaffected };

const char* to_string(Verdict v);

struct PropagationEvidence {
    std::string element_id;
    Role role;
    bool significant;
};

struct PropagationVerdict {
    std::string executable_id;
    Verdict classification = Verdict::unaffected;
    std::vector<PropagationEvidence> evidence;
};

struct LocalizationReport {
    std::vector<LikelihoodResult> results;  // sorted by delta ascending
    std::vector<PropagationVerdict> verdicts;
    double critical_value = kDefaultCriticalValue;
    std::size_t min_n_alt = 30;
    std::vector<std::string> unmodeled;  // alt executables without a model
    std::vector<std::string> warnings;

    nlohmann::json to_json() const;
    static LocalizationReport from_json(const nlohmann::json& j);
    // Tables-style CSV: model,element,cardinality,ll_alt,ll_null,delta,significant
    std::string to_csv() const;
};

// One executable's fitted models.
struct ModelBundle {
    DensityModel model;
    std::map<std::string, UnivariateModel> univariate;  // by element_id

    nlohmann::json to_json() const;
    static ModelBundle from_json(const nlohmann::json& j);
};

// Fits the multivariate model and all univariate marginals for one dataset.
ModelBundle fit_bundle(const BehavioralDataset& dataset, const FitConfig& config);

// Significance rule: (ll_alt - ll_null) < c, strict. Arguments must be finite, c < 0.
bool significance_test(double ll_alt, double ll_null, double c);

LocalizationReport localize(const std::map<std::string, ModelBundle>& models,
                            const std::map<std::string, BehavioralDataset>& alt_datasets,
                            double critical_value, const ProgramGraph& graph,
                            std::size_t min_n_alt = 30);

// Classifies each executable as root-cause candidate, symptom, or unaffected
// based on whether its significant inputs are fed by significant upstream
// outputs. Heuristic; reported as such.
std::vector<PropagationVerdict> propagate(const std::vector<LikelihoodResult>& results,
                                          const ProgramGraph& graph);

// Paired histogram (50 shared bins) plus a 200-point density curve for
// continuous elements; enough to re-draw the comparison panels externally.
nlohmann::json export_plot_data(const ModelBundle* bundle,
                                const BehavioralDataset* null_dataset,
                                const BehavioralDataset* alt_dataset,
                                const CodeElementRef& element);

}  // namespace psmfl
