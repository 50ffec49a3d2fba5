#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "psmfl/graph.hpp"

namespace psmfl {

struct Trace {
    ProgramGraph graph;
    std::vector<RuntimeEvent> events;
};

// Parses the line-oriented trace format:
//   header lines   "#graph {json}" declaring executables, elements, edges
//   event lines    {"x":...,"e":...,"i":...,"v":...}
// Throws ParseError (with line number), SchemaError (undeclared element),
// IntegrityError (non-monotone invocation ids).
Trace load_trace(const std::string& path);
Trace load_trace(std::istream& in, const std::string& origin = "<stream>");

void write_trace(std::ostream& out, const ProgramGraph& graph,
                 const std::vector<RuntimeEvent>& events);
void write_trace(const std::string& path, const ProgramGraph& graph,
                 const std::vector<RuntimeEvent>& events);

// Header-only serialization of the graph, one "#graph" line per entry.
void write_graph_header(std::ostream& out, const ProgramGraph& graph);

}  // namespace psmfl
