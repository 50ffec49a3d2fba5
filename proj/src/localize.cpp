#include "psmfl/localize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "psmfl/errors.hpp"

namespace psmfl {

using nlohmann::json;

const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::root_cause_candidate: return "root_cause_candidate";
        case Verdict::symptom: return "symptom";
        case Verdict::unaffected: return "unaffected";
    }
    return "?";
}

bool significance_test(double ll_alt, double ll_null, double c) {
    if (!std::isfinite(ll_alt) || !std::isfinite(ll_null) || !std::isfinite(c)) {
        throw DomainError("significance_test requires finite arguments");
    }
    return (ll_alt - ll_null) < c;
}

ModelBundle fit_bundle(const BehavioralDataset& dataset, const FitConfig& config) {
    ModelBundle bundle;
    bundle.model = fit(dataset, config);
    for (const auto& col : dataset.columns) {
        bundle.univariate.emplace(col.element_id,
                                  fit_univariate(dataset, col, config.seed));
    }
    return bundle;
}

namespace {

void sort_results(std::vector<LikelihoodResult>& results) {
    std::sort(results.begin(), results.end(),
              [](const LikelihoodResult& a, const LikelihoodResult& b) {
                  if (a.delta != b.delta) return a.delta < b.delta;
                  if (a.executable_id != b.executable_id) {
                      return a.executable_id < b.executable_id;
                  }
                  return a.element_id.value_or("") < b.element_id.value_or("");
              });
}

}  // namespace

LocalizationReport localize(const std::map<std::string, ModelBundle>& models,
                            const std::map<std::string, BehavioralDataset>& alt_datasets,
                            double critical_value, const ProgramGraph& graph,
                            std::size_t min_n_alt) {
    if (!(critical_value < 0)) throw DataError("critical value must be negative");
    LocalizationReport report;
    report.critical_value = critical_value;
    report.min_n_alt = min_n_alt;

    for (const auto& [exec_id, alt] : alt_datasets) {
        auto model_it = models.find(exec_id);
        if (model_it == models.end()) {
            report.unmodeled.push_back(exec_id);
            continue;
        }
        const ModelBundle& bundle = model_it->second;
        const auto n_alt = static_cast<std::size_t>(alt.n());
        const bool insufficient = n_alt < min_n_alt;
        if (insufficient) {
            report.warnings.push_back(exec_id + ": n_alt=" + std::to_string(n_alt) +
                                      " below minimum " + std::to_string(min_n_alt) +
                                      "; insufficient evidence");
        }

        LikelihoodResult multi;
        multi.executable_id = exec_id;
        multi.cardinality = ResultCardinality::multivariate;
        multi.ll_alt = mean_log_likelihood(bundle.model, alt);
        multi.ll_null = bundle.model.self_ll;
        multi.delta = multi.ll_alt - multi.ll_null;
        multi.critical_value = critical_value;
        multi.n_alt = n_alt;
        multi.insufficient_evidence = insufficient;
        multi.significant =
            !insufficient && significance_test(multi.ll_alt, multi.ll_null, critical_value);
        report.results.push_back(std::move(multi));

        for (Eigen::Index j = 0; j < alt.d(); ++j) {
            const CodeElementRef& col = alt.columns[static_cast<std::size_t>(j)];
            auto uni_it = bundle.univariate.find(col.element_id);
            if (uni_it == bundle.univariate.end()) {
                report.warnings.push_back(exec_id + "/" + col.element_id +
                                          ": no univariate model in store");
                continue;
            }
            const UnivariateModel& uni = uni_it->second;
            LikelihoodResult r;
            r.executable_id = exec_id;
            r.element_id = col.element_id;
            r.cardinality = ResultCardinality::univariate;
            r.role = col.role;
            r.ll_alt = uni.mean_log_likelihood(alt.rows.col(j));
            r.ll_null = uni.self_ll;
            r.delta = r.ll_alt - r.ll_null;
            r.critical_value = critical_value;
            r.n_alt = n_alt;
            r.insufficient_evidence = insufficient;
            r.degenerate = uni.degenerate;
            if (r.degenerate) {
                report.warnings.push_back(exec_id + "/" + col.element_id +
                                          ": degenerate (near-constant) null column");
            }
            r.significant =
                !insufficient && significance_test(r.ll_alt, r.ll_null, critical_value);
            report.results.push_back(std::move(r));
        }
    }
    sort_results(report.results);
    std::sort(report.unmodeled.begin(), report.unmodeled.end());
    report.verdicts = propagate(report.results, graph);
    return report;
}

std::vector<PropagationVerdict> propagate(const std::vector<LikelihoodResult>& results,
                                          const ProgramGraph& graph) {
    struct ElementResult {
        std::string element_id;
        Role role;
        bool significant;
    };
    std::map<std::string, std::vector<ElementResult>> by_exec;
    for (const auto& r : results) {
        if (r.cardinality != ResultCardinality::univariate || !r.element_id) continue;
        by_exec[r.executable_id].push_back(
            {*r.element_id, r.role, r.significant && !r.insufficient_evidence});
    }
    // Ensure executables with only a multivariate row still get a verdict.
    for (const auto& r : results) {
        by_exec.try_emplace(r.executable_id);
    }
    for (auto& [exec_id, elems] : by_exec) {
        std::sort(elems.begin(), elems.end(),
                  [](const ElementResult& a, const ElementResult& b) {
                      return a.element_id < b.element_id;
                  });
    }

    // Is a significant input of `exec` explained by a significant upstream
    // output? Matching is by element id: property writes pair with property
    // reads of the same property; invocation args pair with callee
    // parameters; callee return values pair with caller invocation returns.
    auto fed_by_significant_output = [&](const std::string& exec_id,
                                         const ElementResult& input) {
        for (const auto& [other_id, other_elems] : by_exec) {
            if (other_id == exec_id) continue;
            for (const auto& out : other_elems) {
                if (!out.significant || is_input(out.role)) continue;
                if (out.element_id != input.element_id) continue;
                switch (input.role) {
                    case Role::property_read:
                        if (out.role == Role::property_write) return true;
                        break;
                    case Role::parameter:
                        if (out.role == Role::invocation_arg &&
                            graph.has_edge(other_id, exec_id)) {
                            return true;
                        }
                        break;
                    case Role::invocation_return:
                        if (out.role == Role::return_value &&
                            graph.has_edge(exec_id, other_id)) {
                            return true;
                        }
                        break;
                    default:
                        break;
                }
            }
        }
        return false;
    };

    std::vector<PropagationVerdict> verdicts;
    for (const auto& [exec_id, elems] : by_exec) {
        PropagationVerdict verdict;
        verdict.executable_id = exec_id;
        bool any_significant = false;
        bool any_fed_input = false;
        for (const auto& elem : elems) {
            verdict.evidence.push_back({elem.element_id, elem.role, elem.significant});
            if (!elem.significant) continue;
            any_significant = true;
            if (is_input(elem.role) && fed_by_significant_output(exec_id, elem)) {
                any_fed_input = true;
            }
        }
        if (!any_significant) {
            verdict.classification = Verdict::unaffected;
        } else {
            verdict.classification =
                any_fed_input ? Verdict::symptom : Verdict::root_cause_candidate;
        }
        verdicts.push_back(std::move(verdict));
    }
    return verdicts;
}

namespace {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace

std::string LocalizationReport::to_csv() const {
    std::string out = "model,element,cardinality,ll_alt,ll_null,delta,significant\n";
    for (const auto& r : results) {
        out += r.executable_id;
        out += ',';
        out += r.element_id.value_or("");
        out += ',';
        out += r.cardinality == ResultCardinality::multivariate ? "multivariate"
                                                                : "univariate";
        out += ',';
        out += format_double(r.ll_alt);
        out += ',';
        out += format_double(r.ll_null);
        out += ',';
        out += format_double(r.delta);
        out += ',';
        out += r.significant ? "true" : "false";
        out += '\n';
    }
    return out;
}

json LocalizationReport::to_json() const {
    json results_json = json::array();
    for (const auto& r : results) {
        json rj{{"executable", r.executable_id},
                {"cardinality", r.cardinality == ResultCardinality::multivariate
                                    ? "multivariate"
                                    : "univariate"},
                {"ll_alt", r.ll_alt},
                {"ll_null", r.ll_null},
                {"delta", r.delta},
                {"critical_value", r.critical_value},
                {"significant", r.significant},
                {"n_alt", r.n_alt},
                {"insufficient_evidence", r.insufficient_evidence},
                {"degenerate", r.degenerate}};
        if (r.element_id) {
            rj["element"] = *r.element_id;
            rj["role"] = to_string(r.role);
        }
        results_json.push_back(std::move(rj));
    }
    json verdicts_json = json::array();
    for (const auto& v : verdicts) {
        json evidence = json::array();
        for (const auto& e : v.evidence) {
            evidence.push_back(json{{"element", e.element_id},
                                    {"role", to_string(e.role)},
                                    {"significant", e.significant}});
        }
        verdicts_json.push_back(json{{"executable", v.executable_id},
                                     {"classification", to_string(v.classification)},
                                     {"method", "heuristic"},
                                     {"evidence", std::move(evidence)}});
    }
    return json{{"format", "psmfl-report/1"},
                {"critical_value", critical_value},
                {"critical_value_log10", critical_value / std::log(10.0)},
                {"min_n_alt", min_n_alt},
                {"results", std::move(results_json)},
                {"verdicts", std::move(verdicts_json)},
                {"unmodeled", unmodeled},
                {"warnings", warnings}};
}

LocalizationReport LocalizationReport::from_json(const json& j) {
    if (j.at("format").get<std::string>() != "psmfl-report/1") {
        throw SchemaError("unsupported report format");
    }
    LocalizationReport report;
    report.critical_value = j.at("critical_value").get<double>();
    report.min_n_alt = j.at("min_n_alt").get<std::size_t>();
    report.unmodeled = j.at("unmodeled").get<std::vector<std::string>>();
    report.warnings = j.at("warnings").get<std::vector<std::string>>();
    for (const auto& rj : j.at("results")) {
        LikelihoodResult r;
        r.executable_id = rj.at("executable").get<std::string>();
        r.cardinality = rj.at("cardinality").get<std::string>() == "multivariate"
                            ? ResultCardinality::multivariate
                            : ResultCardinality::univariate;
        if (rj.contains("element")) {
            r.element_id = rj.at("element").get<std::string>();
            r.role = role_from_string(rj.at("role").get<std::string>());
        }
        r.ll_alt = rj.at("ll_alt").get<double>();
        r.ll_null = rj.at("ll_null").get<double>();
        r.delta = rj.at("delta").get<double>();
        r.critical_value = rj.at("critical_value").get<double>();
        r.significant = rj.at("significant").get<bool>();
        r.n_alt = rj.at("n_alt").get<std::size_t>();
        r.insufficient_evidence = rj.at("insufficient_evidence").get<bool>();
        r.degenerate = rj.at("degenerate").get<bool>();
        report.results.push_back(std::move(r));
    }
    for (const auto& vj : j.at("verdicts")) {
        PropagationVerdict v;
        v.executable_id = vj.at("executable").get<std::string>();
        const std::string cls = vj.at("classification").get<std::string>();
        v.classification = cls == "root_cause_candidate" ? Verdict::root_cause_candidate
                           : cls == "symptom"            ? Verdict::symptom
                                                         : Verdict::unaffected;
        for (const auto& ej : vj.at("evidence")) {
            v.evidence.push_back({ej.at("element").get<std::string>(),
                                  role_from_string(ej.at("role").get<std::string>()),
                                  ej.at("significant").get<bool>()});
        }
        report.verdicts.push_back(std::move(v));
    }
    return report;
}

json ModelBundle::to_json() const {
    json uni = json::object();
    for (const auto& [element_id, u] : univariate) uni[element_id] = u.to_json();
    return json{{"format", "psmfl-bundle/1"},
                {"multivariate", model.to_json()},
                {"univariate", std::move(uni)}};
}

ModelBundle ModelBundle::from_json(const json& j) {
    if (j.at("format").get<std::string>() != "psmfl-bundle/1") {
        throw SchemaError("unsupported model bundle format");
    }
    ModelBundle bundle;
    bundle.model = DensityModel::from_json(j.at("multivariate"));
    for (auto it = j.at("univariate").begin(); it != j.at("univariate").end(); ++it) {
        bundle.univariate.emplace(it.key(), UnivariateModel::from_json(it.value()));
    }
    return bundle;
}

json export_plot_data(const ModelBundle* bundle, const BehavioralDataset* null_dataset,
                      const BehavioralDataset* alt_dataset,
                      const CodeElementRef& element) {
    auto column_values = [&element](const BehavioralDataset* ds)
        -> std::optional<Eigen::VectorXd> {
        if (ds == nullptr) return std::nullopt;
        const Eigen::Index col = ds->column_index(element.element_id);
        if (col < 0) return std::nullopt;
        return Eigen::VectorXd(ds->rows.col(col));
    };
    auto null_values = column_values(null_dataset);
    auto alt_values = column_values(alt_dataset);
    if (!null_values && !alt_values) {
        throw SchemaError("element " + element.element_id +
                          " absent from both null and alt datasets");
    }

    json doc{{"format", "psmfl-plot/1"},
             {"element",
              json{{"x", element.executable_id},
                   {"e", element.element_id},
                   {"role", to_string(element.role)},
                   {"kind", to_string(element.value_kind)}}},
             {"partial", !null_values || !alt_values}};

    if (element.value_kind == ValueKind::discrete) {
        const int cardinality = element.cardinality.value_or(
            static_cast<int>(std::max(null_values ? null_values->maxCoeff() : 0.0,
                                      alt_values ? alt_values->maxCoeff() : 0.0)) +
            1);
        auto count_codes = [cardinality](const std::optional<Eigen::VectorXd>& values) {
            std::vector<std::size_t> counts(static_cast<std::size_t>(cardinality), 0);
            if (values) {
                for (Eigen::Index i = 0; i < values->size(); ++i) {
                    const auto code = static_cast<long long>((*values)(i));
                    if (code >= 0 && code < cardinality) {
                        ++counts[static_cast<std::size_t>(code)];
                    }
                }
            }
            return counts;
        };
        doc["categorical"] = json{{"cardinality", cardinality},
                                  {"null_counts", count_codes(null_values)},
                                  {"alt_counts", count_codes(alt_values)}};
        return doc;
    }

    constexpr int kBins = 50;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto* values : {&null_values, &alt_values}) {
        if (*values) {
            lo = std::min(lo, (**values).minCoeff());
            hi = std::max(hi, (**values).maxCoeff());
        }
    }
    if (!(hi > lo)) {
        hi = lo + 1.0;
        lo -= 1.0;
    }
    const double width = (hi - lo) / kBins;
    json edges = json::array();
    for (int b = 0; b <= kBins; ++b) edges.push_back(lo + b * width);
    auto histogram = [&](const std::optional<Eigen::VectorXd>& values) {
        std::vector<std::size_t> counts(kBins, 0);
        if (values) {
            for (Eigen::Index i = 0; i < values->size(); ++i) {
                int b = static_cast<int>(((*values)(i)-lo) / width);
                b = std::clamp(b, 0, kBins - 1);
                ++counts[static_cast<std::size_t>(b)];
            }
        }
        return counts;
    };
    doc["histogram"] = json{{"edges", std::move(edges)},
                            {"null_counts", histogram(null_values)},
                            {"alt_counts", histogram(alt_values)}};

    if (bundle != nullptr) {
        auto uni_it = bundle->univariate.find(element.element_id);
        if (uni_it != bundle->univariate.end() &&
            uni_it->second.kind == UnivariateKind::gaussian_kde) {
            constexpr int kCurvePoints = 200;
            json xs = json::array(), ys = json::array();
            const double pad = 0.05 * (hi - lo);
            const double step = (hi - lo + 2 * pad) / (kCurvePoints - 1);
            for (int i = 0; i < kCurvePoints; ++i) {
                const double x = lo - pad + i * step;
                xs.push_back(x);
                ys.push_back(std::exp(uni_it->second.log_pdf(x)));
            }
            doc["density_curve"] = json{{"x", std::move(xs)}, {"y", std::move(ys)}};
        }
    }
    return doc;
}

}  // namespace psmfl
