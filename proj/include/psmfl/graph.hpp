#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace psmfl {

enum class Role {
    parameter,
    property_read,
    invocation_return,
    return_value,
    property_write,
    invocation_arg,
};

enum class ValueKind { continuous, discrete };

const char* to_string(Role role);
const char* to_string(ValueKind kind);
Role role_from_string(const std::string& s);
ValueKind value_kind_from_string(const std::string& s);

// parameter / property_read / invocation_return carry data into an
// executable; the rest carry data out.
bool is_input(Role role);

struct CodeElementRef {
    std::string executable_id;  // e.g. "Person.init"
    std::string element_id;     // e.g. "init.weight", "Person.height", "bmi.return"
    Role role = Role::parameter;
    ValueKind value_kind = ValueKind::continuous;
    // Declared cardinality for discrete elements.
    std::optional<int> cardinality;
    // Optional code table mapping source-level labels to integer codes.
    std::map<std::string, int> code_table;

    bool operator==(const CodeElementRef& other) const {
        return executable_id == other.executable_id && element_id == other.element_id &&
               role == other.role && value_kind == other.value_kind;
    }
};

struct CallEdge {
    std::string caller;
    std::string callee;
    auto operator<=>(const CallEdge&) const = default;
};

// Structure graph declared in a trace header: executables, their observable
// elements, and call dependencies.
class ProgramGraph {
  public:
    void add_executable(const std::string& executable_id);
    void add_element(CodeElementRef element);
    void add_edge(const std::string& caller, const std::string& callee);

    bool has_executable(const std::string& executable_id) const;
    bool has_element(const std::string& executable_id, const std::string& element_id) const;
    const CodeElementRef* find_element(const std::string& executable_id,
                                       const std::string& element_id) const;

    // Sorted by id.
    std::vector<std::string> executables() const;
    // Elements of one executable sorted by (role, element_id); this is the
    // dataset column order.
    std::vector<CodeElementRef> elements_of(const std::string& executable_id) const;
    const std::vector<CallEdge>& edges() const { return edges_; }
    bool has_edge(const std::string& caller, const std::string& callee) const;

    // Throws SchemaError when an element references an undeclared executable
    // or an invocation element has no matching call edge.
    void validate() const;

    // Stable content hash over the canonical serialization; used by the model
    // store to refuse graph/trace mismatches.
    std::uint64_t hash() const;

  private:
    std::set<std::string> executables_;
    std::map<std::string, std::vector<CodeElementRef>> elements_;  // keyed by executable_id
    std::vector<CallEdge> edges_;
};

// Short name of an executable, e.g. "Person.init" -> "init". Invocation
// element ids are prefixed with the callee's short name ("init.height").
std::string short_name(const std::string& executable_id);

struct RuntimeEvent {
    std::string executable_id;
    std::string element_id;
    std::uint64_t invocation_id = 0;
    double value = 0.0;  // discrete elements carry a non-negative integer code
    std::uint64_t sequence_no = 0;
};

}  // namespace psmfl
