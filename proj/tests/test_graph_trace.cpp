#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "psmfl/dataset.hpp"
#include "psmfl/errors.hpp"
#include "psmfl/trace.hpp"

using namespace psmfl;

namespace {

std::string demo_header() {
    return R"(#graph {"executable":"Person.init"}
#graph {"executable":"Servlet.handle"}
#graph {"element":{"x":"Person.init","e":"init.weight","role":"parameter","kind":"continuous"}}
#graph {"element":{"x":"Person.init","e":"init.height","role":"parameter","kind":"continuous"}}
#graph {"element":{"x":"Person.init","e":"Person.weight","role":"property_write","kind":"continuous"}}
#graph {"element":{"x":"Servlet.handle","e":"init.weight","role":"invocation_arg","kind":"continuous"}}
#graph {"edge":{"from":"Servlet.handle","to":"Person.init"}}
)";
}

}  // namespace

TEST_CASE("empty event section yields declared graph and no events") {
    std::istringstream in(demo_header());
    Trace trace = load_trace(in);
    CHECK(trace.events.empty());
    CHECK(trace.graph.has_executable("Person.init"));
    CHECK(trace.graph.elements_of("Person.init").size() == 3);
}

TEST_CASE("single event is parsed with its value") {
    std::istringstream in(demo_header() +
                          R"({"x":"Person.init","e":"init.weight","i":0,"v":69.54})" "\n");
    Trace trace = load_trace(in);
    REQUIRE(trace.events.size() == 1);
    CHECK(trace.events[0].executable_id == "Person.init");
    CHECK(trace.events[0].value == doctest::Approx(69.54));
}

TEST_CASE("undeclared element is a schema error") {
    std::istringstream in(demo_header() + R"({"x":"Foo","e":"bar","i":0,"v":1})" "\n");
    CHECK_THROWS_AS(load_trace(in), SchemaError);
}

TEST_CASE("malformed line reports its line number") {
    std::istringstream in(demo_header() + "{not json\n");
    try {
        load_trace(in, "trace");
        FAIL("expected ParseError");
    } catch (const ParseError& ex) {
        CHECK(std::string(ex.what()).find("trace:8") != std::string::npos);
    }
}

TEST_CASE("invocation ids must be monotone per executable") {
    std::istringstream in(demo_header() +
                          R"({"x":"Person.init","e":"init.weight","i":5,"v":1})" "\n" +
                          R"({"x":"Person.init","e":"init.weight","i":3,"v":1})" "\n");
    CHECK_THROWS_AS(load_trace(in), IntegrityError);
}

TEST_CASE("discrete events must be valid integer codes") {
    std::string header = R"(#graph {"executable":"A.f"}
#graph {"element":{"x":"A.f","e":"f.g","role":"parameter","kind":"discrete","card":2}}
)";
    std::istringstream bad_value(header + R"({"x":"A.f","e":"f.g","i":0,"v":0.5})" "\n");
    CHECK_THROWS_AS(load_trace(bad_value), SchemaError);
    std::istringstream out_of_range(header + R"({"x":"A.f","e":"f.g","i":0,"v":2})" "\n");
    CHECK_THROWS_AS(load_trace(out_of_range), SchemaError);
}

TEST_CASE("invocation elements require a matching call edge") {
    ProgramGraph graph;
    graph.add_executable("A.f");
    CodeElementRef ref;
    ref.executable_id = "A.f";
    ref.element_id = "g.x";
    ref.role = Role::invocation_arg;
    graph.add_element(ref);
    CHECK_THROWS_AS(graph.validate(), SchemaError);
}

TEST_CASE("assembly produces one row per complete invocation") {
    std::ostringstream trace_text;
    trace_text << demo_header();
    for (int i = 0; i < 5; ++i) {
        trace_text << R"({"x":"Person.init","e":"init.weight","i":)" << i
                   << R"(,"v":)" << 60.0 + i << "}\n";
        trace_text << R"({"x":"Person.init","e":"init.height","i":)" << i
                   << R"(,"v":)" << 160.0 + i << "}\n";
        trace_text << R"({"x":"Person.init","e":"Person.weight","i":)" << i
                   << R"(,"v":)" << 60.0 + i << "}\n";
    }
    std::istringstream in(trace_text.str());
    Trace trace = load_trace(in);
    auto result = assemble_datasets(trace.events, trace.graph);
    REQUIRE(result.datasets.contains("Person.init"));
    const auto& ds = result.datasets.at("Person.init");
    CHECK(ds.n() == 5);
    CHECK(ds.d() == 3);
    // Columns sorted by (role, element_id): parameters before property writes.
    CHECK(ds.columns[0].element_id == "init.height");
    CHECK(ds.columns[1].element_id == "init.weight");
    CHECK(ds.columns[2].element_id == "Person.weight");
    CHECK(ds.rows(2, 1) == doctest::Approx(62.0));
    // Servlet.handle got no events at all.
    CHECK(std::find(result.warnings.excluded_executables.begin(),
                    result.warnings.excluded_executables.end(),
                    "Servlet.handle") != result.warnings.excluded_executables.end());
}

TEST_CASE("one invocation one element assembles to a 1x1 matrix") {
    ProgramGraph graph;
    graph.add_executable("A.f");
    CodeElementRef ref;
    ref.executable_id = "A.f";
    ref.element_id = "f.x";
    ref.role = Role::parameter;
    graph.add_element(ref);
    std::vector<RuntimeEvent> events{{"A.f", "f.x", 0, 1.0, 0}};
    auto result = assemble_datasets(events, graph);
    const auto& ds = result.datasets.at("A.f");
    CHECK(ds.n() == 1);
    CHECK(ds.d() == 1);
    CHECK(ds.rows(0, 0) == 1.0);
}

TEST_CASE("incomplete invocations are dropped and counted") {
    std::istringstream in(demo_header() +
                          R"({"x":"Person.init","e":"init.weight","i":0,"v":70})" "\n" +
                          R"({"x":"Person.init","e":"init.height","i":0,"v":170})" "\n" +
                          R"({"x":"Person.init","e":"Person.weight","i":0,"v":70})" "\n" +
                          R"({"x":"Person.init","e":"init.weight","i":1,"v":80})" "\n");
    Trace trace = load_trace(in);
    auto result = assemble_datasets(trace.events, trace.graph);
    CHECK(result.datasets.at("Person.init").n() == 1);
    CHECK(result.warnings.dropped_rows.at("Person.init") == 1);
}

TEST_CASE("assembly is stable under event permutation within invocations") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> value(0.0, 100.0);
    ProgramGraph graph;
    graph.add_executable("A.f");
    for (const char* elem : {"f.a", "f.b", "f.c"}) {
        CodeElementRef ref;
        ref.executable_id = "A.f";
        ref.element_id = elem;
        ref.role = Role::parameter;
        graph.add_element(ref);
    }
    std::vector<RuntimeEvent> events;
    for (std::uint64_t i = 0; i < 20; ++i) {
        for (const char* elem : {"f.a", "f.b", "f.c"}) {
            events.push_back({"A.f", elem, i, value(rng), 0});
        }
    }
    auto baseline = assemble_datasets(events, graph);
    // Shuffle events within each invocation.
    for (std::size_t start = 0; start < events.size(); start += 3) {
        std::shuffle(events.begin() + static_cast<long>(start),
                     events.begin() + static_cast<long>(start + 3), rng);
    }
    auto shuffled = assemble_datasets(events, graph);
    CHECK(baseline.datasets.at("A.f").rows == shuffled.datasets.at("A.f").rows);
}

TEST_CASE("dataset to events round-trips exactly") {
    ProgramGraph graph;
    graph.add_executable("A.f");
    for (const char* elem : {"f.a", "f.b"}) {
        CodeElementRef ref;
        ref.executable_id = "A.f";
        ref.element_id = elem;
        ref.role = Role::parameter;
        graph.add_element(ref);
    }
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> value(-5.0, 5.0);
    std::vector<RuntimeEvent> events;
    for (std::uint64_t i = 0; i < 50; ++i) {
        events.push_back({"A.f", "f.a", i, value(rng), 0});
        events.push_back({"A.f", "f.b", i, value(rng), 0});
    }
    auto first = assemble_datasets(events, graph);
    auto round = assemble_datasets(dataset_to_events(first.datasets.at("A.f")), graph);
    CHECK(first.datasets.at("A.f").rows == round.datasets.at("A.f").rows);
}

TEST_CASE("trace file write/read round-trips") {
    std::istringstream in(demo_header() +
                          R"({"x":"Person.init","e":"init.weight","i":0,"v":69.54})" "\n");
    Trace trace = load_trace(in);
    std::ostringstream out;
    write_trace(out, trace.graph, trace.events);
    std::istringstream in2(out.str());
    Trace reloaded = load_trace(in2);
    CHECK(reloaded.events.size() == trace.events.size());
    CHECK(reloaded.events[0].value == trace.events[0].value);
    CHECK(reloaded.graph.hash() == trace.graph.hash());
}

TEST_CASE("graph hash distinguishes different graphs") {
    ProgramGraph a;
    a.add_executable("A.f");
    ProgramGraph b;
    b.add_executable("B.g");
    CHECK(a.hash() != b.hash());
    ProgramGraph a2;
    a2.add_executable("A.f");
    CHECK(a.hash() == a2.hash());
}
