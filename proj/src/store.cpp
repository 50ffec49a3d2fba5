#include "psmfl/store.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "psmfl/errors.hpp"

namespace psmfl {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sanitize_id(const std::string& executable_id) {
    std::string out;
    out.reserve(executable_id.size());
    for (char c : executable_id) {
        out += (std::isalnum(static_cast<unsigned char>(c)) != 0) ? c : '_';
    }
    return out;
}

void save_models(const std::string& dir, const ProgramGraph& graph,
                 const std::map<std::string, ModelBundle>& models,
                 const AssemblyWarnings& warnings) {
    fs::create_directories(dir);
    json manifest{{"format", "psmfl-store/1"},
                  {"graph_hash", std::to_string(graph.hash())}};
    json entries = json::array();
    for (const auto& [exec_id, bundle] : models) {
        const std::string file = sanitize_id(exec_id) + ".json";
        std::ofstream out(fs::path(dir) / file);
        if (!out) throw DataError("cannot write model file: " + file);
        out << bundle.to_json().dump(2) << "\n";
        entries.push_back(json{{"executable", exec_id},
                               {"file", file},
                               {"self_ll", bundle.model.self_ll},
                               {"d", bundle.model.dim()}});
    }
    manifest["models"] = std::move(entries);
    json warn = json::array();
    for (const auto& [exec_id, dropped] : warnings.dropped_rows) {
        warn.push_back(exec_id + ": dropped " + std::to_string(dropped) +
                       " incomplete invocation(s)");
    }
    for (const auto& exec_id : warnings.excluded_executables) {
        warn.push_back(exec_id + ": no complete invocations, excluded");
    }
    manifest["warnings"] = std::move(warn);
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw DataError("cannot write manifest in " + dir);
    out << manifest.dump(2) << "\n";
}

LoadedStore load_models(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw DataError("no manifest.json in model directory: " + dir);
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& ex) {
        throw ParseError("malformed manifest in " + dir + ": " + ex.what());
    }
    if (manifest.at("format").get<std::string>() != "psmfl-store/1") {
        throw SchemaError("unsupported model store format in " + dir);
    }
    LoadedStore store;
    store.graph_hash = std::stoull(manifest.at("graph_hash").get<std::string>());
    for (const auto& entry : manifest.at("models")) {
        const auto file = entry.at("file").get<std::string>();
        std::ifstream model_in(fs::path(dir) / file);
        if (!model_in) throw DataError("missing model file: " + file);
        json doc;
        try {
            model_in >> doc;
        } catch (const json::exception& ex) {
            throw ParseError("malformed model file " + file + ": " + ex.what());
        }
        store.models.emplace(entry.at("executable").get<std::string>(),
                             ModelBundle::from_json(doc));
    }
    return store;
}

}  // namespace psmfl
