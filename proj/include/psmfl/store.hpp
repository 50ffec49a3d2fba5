#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "psmfl/dataset.hpp"
#include "psmfl/localize.hpp"

namespace psmfl {

// Filesystem-safe encoding of an executable id ("Person.init" -> "Person_init").
std::string sanitize_id(const std::string& executable_id);

// Layout: <dir>/manifest.json plus one bundle document per executable.
void save_models(const std::string& dir, const ProgramGraph& graph,
                 const std::map<std::string, ModelBundle>& models,
                 const AssemblyWarnings& warnings);

struct LoadedStore {
    std::map<std::string, ModelBundle> models;
    std::uint64_t graph_hash = 0;
};

LoadedStore load_models(const std::string& dir);

}  // namespace psmfl
