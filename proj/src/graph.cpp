#include "psmfl/graph.hpp"

#include <algorithm>

#include "psmfl/errors.hpp"

namespace psmfl {

const char* to_string(Role role) {
    switch (role) {
        case Role::parameter: return "parameter";
        case Role::property_read: return "property_read";
        case Role::invocation_return: return "invocation_return";
        case Role::return_value: return "return_value";
        case Role::property_write: return "property_write";
        case Role::invocation_arg: return "invocation_arg";
    }
    return "?";
}

const char* to_string(ValueKind kind) {
    return kind == ValueKind::continuous ? "continuous" : "discrete";
}

Role role_from_string(const std::string& s) {
    if (s == "parameter") return Role::parameter;
    if (s == "property_read") return Role::property_read;
    if (s == "invocation_return") return Role::invocation_return;
    if (s == "return_value") return Role::return_value;
    if (s == "property_write") return Role::property_write;
    if (s == "invocation_arg") return Role::invocation_arg;
    throw SchemaError("unknown element role: " + s);
}

ValueKind value_kind_from_string(const std::string& s) {
    if (s == "continuous") return ValueKind::continuous;
    if (s == "discrete") return ValueKind::discrete;
    throw SchemaError("unknown value kind: " + s);
}

bool is_input(Role role) {
    return role == Role::parameter || role == Role::property_read ||
           role == Role::invocation_return;
}

void ProgramGraph::add_executable(const std::string& executable_id) {
    executables_.insert(executable_id);
}

void ProgramGraph::add_element(CodeElementRef element) {
    auto& elems = elements_[element.executable_id];
    for (const auto& existing : elems) {
        if (existing.element_id == element.element_id) {
            throw SchemaError("duplicate element declaration: " + element.executable_id +
                              "/" + element.element_id);
        }
    }
    elems.push_back(std::move(element));
}

void ProgramGraph::add_edge(const std::string& caller, const std::string& callee) {
    CallEdge edge{caller, callee};
    if (std::find(edges_.begin(), edges_.end(), edge) == edges_.end()) {
        edges_.push_back(std::move(edge));
    }
}

bool ProgramGraph::has_executable(const std::string& executable_id) const {
    return executables_.contains(executable_id);
}

bool ProgramGraph::has_element(const std::string& executable_id,
                               const std::string& element_id) const {
    return find_element(executable_id, element_id) != nullptr;
}

const CodeElementRef* ProgramGraph::find_element(const std::string& executable_id,
                                                 const std::string& element_id) const {
    auto it = elements_.find(executable_id);
    if (it == elements_.end()) return nullptr;
    for (const auto& elem : it->second) {
        if (elem.element_id == element_id) return &elem;
    }
    return nullptr;
}

std::vector<std::string> ProgramGraph::executables() const {
    return {executables_.begin(), executables_.end()};
}

std::vector<CodeElementRef> ProgramGraph::elements_of(const std::string& executable_id) const {
    auto it = elements_.find(executable_id);
    if (it == elements_.end()) return {};
    std::vector<CodeElementRef> out = it->second;
    std::sort(out.begin(), out.end(), [](const CodeElementRef& a, const CodeElementRef& b) {
        if (a.role != b.role) return static_cast<int>(a.role) < static_cast<int>(b.role);
        return a.element_id < b.element_id;
    });
    return out;
}

bool ProgramGraph::has_edge(const std::string& caller, const std::string& callee) const {
    return std::find(edges_.begin(), edges_.end(), CallEdge{caller, callee}) != edges_.end();
}

void ProgramGraph::validate() const {
    for (const auto& [exec_id, elems] : elements_) {
        if (!executables_.contains(exec_id)) {
            throw SchemaError("element references undeclared executable: " + exec_id);
        }
        for (const auto& elem : elems) {
            if (elem.role != Role::invocation_arg && elem.role != Role::invocation_return) {
                continue;
            }
            // "init.height" names the callee "init"; require a call edge from
            // this executable to some callee with that short name.
            auto dot = elem.element_id.find('.');
            std::string callee_short =
                dot == std::string::npos ? elem.element_id : elem.element_id.substr(0, dot);
            bool found = false;
            for (const auto& edge : edges_) {
                if (edge.caller == exec_id && short_name(edge.callee) == callee_short) {
                    found = true;
                    break;
                }
            }
            if (!found) {
                throw SchemaError("invocation element " + exec_id + "/" + elem.element_id +
                                  " has no matching call edge to a callee named '" +
                                  callee_short + "'");
            }
        }
    }
    for (const auto& edge : edges_) {
        if (!executables_.contains(edge.caller) || !executables_.contains(edge.callee)) {
            throw SchemaError("call edge references undeclared executable: " + edge.caller +
                              " -> " + edge.callee);
        }
    }
}

std::uint64_t ProgramGraph::hash() const {
    // FNV-1a over the canonical (sorted) textual form.
    std::uint64_t h = 14695981039346656037ULL;
    auto mix = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        h ^= 0xff;
        h *= 1099511628211ULL;
    };
    for (const auto& exec_id : executables()) {
        mix("x:" + exec_id);
        for (const auto& elem : elements_of(exec_id)) {
            std::string line = "e:" + elem.element_id + ":" + to_string(elem.role) + ":" +
                               to_string(elem.value_kind);
            if (elem.cardinality) line += ":" + std::to_string(*elem.cardinality);
            mix(line);
        }
    }
    std::vector<CallEdge> sorted_edges = edges_;
    std::sort(sorted_edges.begin(), sorted_edges.end());
    for (const auto& edge : sorted_edges) {
        mix("c:" + edge.caller + ">" + edge.callee);
    }
    return h;
}

std::string short_name(const std::string& executable_id) {
    auto dot = executable_id.rfind('.');
    return dot == std::string::npos ? executable_id : executable_id.substr(dot + 1);
}

}  // namespace psmfl
