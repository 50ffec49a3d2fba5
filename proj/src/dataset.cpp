#include "psmfl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "psmfl/errors.hpp"

namespace psmfl {

Eigen::Index BehavioralDataset::column_index(const std::string& element_id) const {
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(columns.size()); ++j) {
        if (columns[j].element_id == element_id) return j;
    }
    return -1;
}

AssemblyResult assemble_datasets(const std::vector<RuntimeEvent>& events,
                                 const ProgramGraph& graph) {
    AssemblyResult result;

    // executable -> invocation_id -> column values (NaN = not yet seen)
    struct Partial {
        std::vector<std::uint64_t> order;  // invocation ids in first-seen order
        std::map<std::uint64_t, std::vector<double>> values;
    };
    std::map<std::string, Partial> partials;
    std::map<std::string, std::map<std::string, Eigen::Index>> column_of;
    std::map<std::string, std::vector<CodeElementRef>> columns_of;

    for (const auto& exec_id : graph.executables()) {
        auto cols = graph.elements_of(exec_id);
        if (cols.empty()) continue;
        auto& index = column_of[exec_id];
        for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(cols.size()); ++j) {
            index[cols[j].element_id] = j;
        }
        columns_of[exec_id] = std::move(cols);
    }

    for (const auto& event : events) {
        auto cols_it = column_of.find(event.executable_id);
        if (cols_it == column_of.end()) {
            throw SchemaError("event references executable with no declared elements: " +
                              event.executable_id);
        }
        auto col_it = cols_it->second.find(event.element_id);
        if (col_it == cols_it->second.end()) {
            throw SchemaError("event references undeclared element " + event.executable_id +
                              "/" + event.element_id);
        }
        auto& partial = partials[event.executable_id];
        auto [row_it, inserted] = partial.values.try_emplace(
            event.invocation_id,
            std::vector<double>(cols_it->second.size(),
                                std::numeric_limits<double>::quiet_NaN()));
        if (inserted) partial.order.push_back(event.invocation_id);
        double& cell = row_it->second[col_it->second];
        if (std::isnan(cell)) cell = event.value;  // first occurrence wins
    }

    for (const auto& exec_id : graph.executables()) {
        auto cols_it = columns_of.find(exec_id);
        if (cols_it == columns_of.end()) continue;  // executable declares no elements
        const auto& columns = cols_it->second;

        std::vector<const std::vector<double>*> complete;
        std::size_t dropped = 0;
        auto part_it = partials.find(exec_id);
        if (part_it != partials.end()) {
            for (std::uint64_t invocation_id : part_it->second.order) {
                const auto& row = part_it->second.values.at(invocation_id);
                bool full = std::none_of(row.begin(), row.end(),
                                         [](double v) { return std::isnan(v); });
                if (full) {
                    complete.push_back(&row);
                } else {
                    ++dropped;
                }
            }
        }
        if (dropped > 0) result.warnings.dropped_rows[exec_id] = dropped;
        if (complete.empty()) {
            result.warnings.excluded_executables.push_back(exec_id);
            continue;
        }

        BehavioralDataset dataset;
        dataset.executable_id = exec_id;
        dataset.columns = columns;
        dataset.rows.resize(static_cast<Eigen::Index>(complete.size()),
                            static_cast<Eigen::Index>(columns.size()));
        for (Eigen::Index i = 0; i < dataset.rows.rows(); ++i) {
            for (Eigen::Index j = 0; j < dataset.rows.cols(); ++j) {
                dataset.rows(i, j) = (*complete[static_cast<std::size_t>(i)])[j];
            }
        }
        dataset.discrete_cardinalities.reserve(columns.size());
        for (const auto& col : columns) {
            dataset.discrete_cardinalities.push_back(
                col.value_kind == ValueKind::discrete ? col.cardinality : std::nullopt);
        }
        result.datasets.emplace(exec_id, std::move(dataset));
    }
    return result;
}

std::vector<RuntimeEvent> dataset_to_events(const BehavioralDataset& dataset) {
    std::vector<RuntimeEvent> events;
    events.reserve(static_cast<std::size_t>(dataset.n() * dataset.d()));
    std::uint64_t sequence_no = 0;
    for (Eigen::Index i = 0; i < dataset.n(); ++i) {
        for (Eigen::Index j = 0; j < dataset.d(); ++j) {
            events.push_back({dataset.executable_id, dataset.columns[j].element_id,
                              static_cast<std::uint64_t>(i), dataset.rows(i, j),
                              sequence_no++});
        }
    }
    return events;
}

}  // namespace psmfl
