#include "epo/manifest.hpp"

#include <cstdio>
#include <filesystem>

#include "epo/errors.hpp"
#include "epo/textio.hpp"

namespace epo {

nlohmann::ordered_json manifest_to_json(const RunManifest& m) {
    nlohmann::ordered_json j;
    j["tool"] = kToolVersion;
    j["command"] = m.command;
    j["arguments"] = m.arguments;
    j["seed"] = m.seed;
    nlohmann::ordered_json inputs = nlohmann::ordered_json::array();
    for (const std::string& path : m.inputs) {
        nlohmann::ordered_json entry;
        entry["path"] = path;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "0x%016llx",
                      static_cast<unsigned long long>(fnv1a(read_file(path))));
        entry["fnv1a"] = buf;
        inputs.push_back(entry);
    }
    j["inputs"] = inputs;
    j["overrides"] = m.overrides;
    return j;
}

void write_manifest(const std::string& out_dir, const RunManifest& m) {
    write_file(out_dir + "/manifest.json", manifest_to_json(m).dump(2) + "\n");
}

void ensure_dir(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) throw DomainError("cannot create directory " + path + ": " + ec.message());
}

} // namespace epo
