#include "psmfl/trace.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "psmfl/errors.hpp"

namespace psmfl {

using nlohmann::json;

namespace {

constexpr const char* kHeaderPrefix = "#graph ";

void parse_header_line(const json& obj, ProgramGraph& graph) {
    if (obj.contains("executable")) {
        graph.add_executable(obj.at("executable").get<std::string>());
        return;
    }
    if (obj.contains("element")) {
        const json& e = obj.at("element");
        CodeElementRef elem;
        elem.executable_id = e.at("x").get<std::string>();
        elem.element_id = e.at("e").get<std::string>();
        elem.role = role_from_string(e.at("role").get<std::string>());
        elem.value_kind = value_kind_from_string(e.at("kind").get<std::string>());
        if (e.contains("card")) elem.cardinality = e.at("card").get<int>();
        if (elem.value_kind == ValueKind::discrete && !elem.cardinality) {
            throw SchemaError("discrete element " + elem.executable_id + "/" +
                              elem.element_id + " missing declared cardinality");
        }
        if (e.contains("codes")) {
            for (auto it = e.at("codes").begin(); it != e.at("codes").end(); ++it) {
                elem.code_table[it.key()] = it.value().get<int>();
            }
        }
        graph.add_element(std::move(elem));
        return;
    }
    if (obj.contains("edge")) {
        const json& edge = obj.at("edge");
        graph.add_edge(edge.at("from").get<std::string>(), edge.at("to").get<std::string>());
        return;
    }
    throw SchemaError("unrecognized #graph declaration: " + obj.dump());
}

}  // namespace

Trace load_trace(std::istream& in, const std::string& origin) {
    Trace trace;
    std::string line;
    std::size_t line_no = 0;
    std::uint64_t sequence_no = 0;
    // Last seen invocation id per executable, for monotonicity checks.
    std::map<std::string, std::uint64_t> last_invocation;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto where = [&] { return origin + ":" + std::to_string(line_no); };

        if (line.starts_with("#")) {
            if (!line.starts_with(kHeaderPrefix)) continue;  // comment
            json obj;
            try {
                obj = json::parse(line.substr(std::string(kHeaderPrefix).size()));
            } catch (const json::exception& ex) {
                throw ParseError("malformed header at " + where() + ": " + ex.what());
            }
            try {
                parse_header_line(obj, trace.graph);
            } catch (const json::exception& ex) {
                throw ParseError("invalid header at " + where() + ": " + ex.what());
            }
            continue;
        }

        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception& ex) {
            throw ParseError("malformed event at " + where() + ": " + ex.what());
        }
        RuntimeEvent event;
        try {
            event.executable_id = obj.at("x").get<std::string>();
            event.element_id = obj.at("e").get<std::string>();
            event.invocation_id = obj.at("i").get<std::uint64_t>();
            event.value = obj.at("v").get<double>();
        } catch (const json::exception& ex) {
            throw ParseError("invalid event at " + where() + ": " + ex.what());
        }
        event.sequence_no = sequence_no++;

        const CodeElementRef* elem =
            trace.graph.find_element(event.executable_id, event.element_id);
        if (elem == nullptr) {
            throw SchemaError("event at " + where() + " references undeclared element " +
                              event.executable_id + "/" + event.element_id);
        }
        if (elem->value_kind == ValueKind::discrete) {
            if (event.value < 0 || event.value != std::floor(event.value)) {
                throw SchemaError("event at " + where() +
                                  " carries a non-integer code for discrete element " +
                                  event.element_id);
            }
            if (elem->cardinality && event.value >= *elem->cardinality) {
                throw SchemaError("event at " + where() + " code " +
                                  std::to_string(static_cast<long long>(event.value)) +
                                  " exceeds declared cardinality of " + event.element_id);
            }
        }
        auto [it, inserted] = last_invocation.try_emplace(event.executable_id,
                                                         event.invocation_id);
        if (!inserted) {
            if (event.invocation_id < it->second) {
                throw IntegrityError("non-monotone invocation id at " + where() + " for " +
                                     event.executable_id);
            }
            it->second = event.invocation_id;
        }
        trace.events.push_back(std::move(event));
    }
    trace.graph.validate();
    return trace;
}

Trace load_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open trace file: " + path);
    return load_trace(in, path);
}

void write_graph_header(std::ostream& out, const ProgramGraph& graph) {
    for (const auto& exec_id : graph.executables()) {
        out << kHeaderPrefix << json{{"executable", exec_id}}.dump() << "\n";
    }
    for (const auto& exec_id : graph.executables()) {
        for (const auto& elem : graph.elements_of(exec_id)) {
            json e{{"x", elem.executable_id},
                   {"e", elem.element_id},
                   {"role", to_string(elem.role)},
                   {"kind", to_string(elem.value_kind)}};
            if (elem.cardinality) e["card"] = *elem.cardinality;
            if (!elem.code_table.empty()) e["codes"] = elem.code_table;
            out << kHeaderPrefix << json{{"element", e}}.dump() << "\n";
        }
    }
    for (const auto& edge : graph.edges()) {
        out << kHeaderPrefix
            << json{{"edge", {{"from", edge.caller}, {"to", edge.callee}}}}.dump() << "\n";
    }
}

void write_trace(std::ostream& out, const ProgramGraph& graph,
                 const std::vector<RuntimeEvent>& events) {
    write_graph_header(out, graph);
    for (const auto& event : events) {
        out << json{{"x", event.executable_id},
                    {"e", event.element_id},
                    {"i", event.invocation_id},
                    {"v", event.value}}
                   .dump()
            << "\n";
    }
}

void write_trace(const std::string& path, const ProgramGraph& graph,
                 const std::vector<RuntimeEvent>& events) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write trace file: " + path);
    write_trace(out, graph, events);
}

}  // namespace psmfl
