#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "psmfl/graph.hpp"

namespace psmfl {

// Invocation rows x element columns for one executable. Column order is the
// graph's deterministic (role, element_id) ordering.
struct BehavioralDataset {
    std::string executable_id;
    std::vector<CodeElementRef> columns;
    Eigen::MatrixXd rows;  // N x d
    std::vector<std::optional<int>> discrete_cardinalities;  // per column

    Eigen::Index n() const { return rows.rows(); }
    Eigen::Index d() const { return rows.cols(); }
    // Index of a column by element id, or -1.
    Eigen::Index column_index(const std::string& element_id) const;
};

struct AssemblyWarnings {
    // executable -> number of incomplete invocations dropped
    std::map<std::string, std::size_t> dropped_rows;
    // executables excluded because they had zero complete invocations
    std::vector<std::string> excluded_executables;

    bool empty() const { return dropped_rows.empty() && excluded_executables.empty(); }
};

struct AssemblyResult {
    std::map<std::string, BehavioralDataset> datasets;
    AssemblyWarnings warnings;
};

// Groups events by (executable, invocation) into matrix rows. An invocation
// row is complete when every declared element of the executable has a value;
// incomplete rows are dropped and counted. Repeated values for one element
// within an invocation keep the first occurrence.
AssemblyResult assemble_datasets(const std::vector<RuntimeEvent>& events,
                                 const ProgramGraph& graph);

// Inverse of assembly, for round-trip checks and re-export.
std::vector<RuntimeEvent> dataset_to_events(const BehavioralDataset& dataset);

}  // namespace psmfl
