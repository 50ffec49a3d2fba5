#include <doctest.h>

#include <set>
#include <sstream>

#include "psmfl/dataset.hpp"
#include "psmfl/demo.hpp"

using namespace psmfl;

TEST_CASE("bmi computation matches the worked example") {
    // 168.59 cm, 69.54 kg
    CHECK(bmi_meters(168.59, 69.54) == doctest::Approx(24.466).epsilon(1e-4));
    CHECK(bmi_inches(168.59, 69.54) == doctest::Approx(0.01578).epsilon(1e-3));
    CHECK(bmi_meters(168.59, -69.54) == doctest::Approx(-24.466).epsilon(1e-4));
}

TEST_CASE("advice codes follow the BMI cut-offs") {
    CHECK(advice_code_for_bmi(17.0) == kAdviceUnderweight);
    CHECK(advice_code_for_bmi(18.5) == kAdviceHealthy);
    CHECK(advice_code_for_bmi(24.9) == kAdviceHealthy);
    CHECK(advice_code_for_bmi(25.0) == kAdviceOverweight);
    CHECK(advice_code_for_bmi(30.0) == kAdviceObese);
    CHECK(advice_code_for_bmi(-24.0) == kAdviceUnderweight);
}

TEST_CASE("nutrition advisor graph declares the four executables") {
    auto graph = nutrition_advisor_graph();
    auto execs = graph.executables();
    CHECK(execs.size() == 4);
    CHECK(graph.has_edge("Servlet.handle", "Person.init"));
    CHECK(graph.has_edge("NutritionAdvisor.advice", "BmiService.bmi"));
    CHECK(graph.elements_of("Person.init").size() == 6);
    CHECK(graph.elements_of("NutritionAdvisor.advice").size() == 6);
}

TEST_CASE("workload is deterministic and serializes bitwise identically") {
    WorkloadConfig config;
    config.request_count = 40;
    config.seed = 123;
    auto graph = nutrition_advisor_graph();
    std::ostringstream a, b;
    write_trace(a, graph, run_workload(config, FaultId::none));
    write_trace(b, graph, run_workload(config, FaultId::none));
    CHECK(a.str() == b.str());
}

TEST_CASE("regression fault changes only mathematically downstream values") {
    WorkloadConfig config;
    config.request_count = 60;
    config.seed = 7;
    auto clean = run_workload(config, FaultId::none);
    auto faulty = run_workload(config, FaultId::regression_negated_weight);
    REQUIRE(clean.size() == faulty.size());
    std::set<std::pair<std::string, std::string>> changed;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        CHECK(clean[i].element_id == faulty[i].element_id);
        if (clean[i].value != faulty[i].value) {
            changed.insert({clean[i].executable_id, clean[i].element_id});
            if (clean[i].element_id == "Person.weight") {
                CHECK(faulty[i].value == -clean[i].value);
            }
        }
    }
    // Upstream inputs never change.
    CHECK_FALSE(changed.contains({"Servlet.handle", "init.weight"}));
    CHECK_FALSE(changed.contains({"Person.init", "init.weight"}));
    CHECK_FALSE(changed.contains({"Person.init", "Person.height"}));
    // The seeded write and its downstream reads do.
    CHECK(changed.contains({"Person.init", "Person.weight"}));
    CHECK(changed.contains({"NutritionAdvisor.advice", "Person.weight"}));
    CHECK(changed.contains({"BmiService.bmi", "bmi.return"}));
}

TEST_CASE("integration fault only changes the bmi and advice values") {
    WorkloadConfig config;
    config.request_count = 60;
    config.seed = 11;
    auto clean = run_workload(config, FaultId::none);
    auto faulty = run_workload(config, FaultId::integration_inches_bmi);
    REQUIRE(clean.size() == faulty.size());
    for (std::size_t i = 0; i < clean.size(); ++i) {
        const auto& e = clean[i].element_id;
        if (e == "bmi.return" || e == "advice.return") continue;
        CHECK(clean[i].value == faulty[i].value);
    }
}

TEST_CASE("workload assembles into complete datasets of the right shape") {
    WorkloadConfig config;
    config.request_count = 100;
    config.seed = 3;
    auto graph = nutrition_advisor_graph();
    auto result = assemble_datasets(run_workload(config, FaultId::none), graph);
    CHECK(result.warnings.empty());
    REQUIRE(result.datasets.size() == 4);
    CHECK(result.datasets.at("Servlet.handle").n() == 100);
    CHECK(result.datasets.at("Servlet.handle").d() == 3);
    CHECK(result.datasets.at("Person.init").d() == 6);
    CHECK(result.datasets.at("NutritionAdvisor.advice").d() == 6);
    CHECK(result.datasets.at("BmiService.bmi").d() == 3);
    // Sampled anthropometrics respect the truncation bounds.
    const auto& init = result.datasets.at("Person.init");
    const auto h = init.column_index("init.height");
    const auto w = init.column_index("init.weight");
    CHECK(init.rows.col(h).minCoeff() >= 120.0);
    CHECK(init.rows.col(h).maxCoeff() <= 220.0);
    CHECK(init.rows.col(w).minCoeff() >= 30.0);
    CHECK(init.rows.col(w).maxCoeff() <= 250.0);
}

TEST_CASE("invalid workload configs are rejected") {
    WorkloadConfig config;
    config.request_count = 0;
    CHECK_THROWS(run_workload(config, FaultId::none));
    WorkloadConfig bad_corr;
    bad_corr.gender0.correlation = 1.0;
    CHECK_THROWS(run_workload(bad_corr, FaultId::none));
}
