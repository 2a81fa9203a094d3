#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace epo {

inline constexpr const char* kToolVersion = "epo 1.0.0";

// Written before any other artifact so a run is reconstructible from its
// output directory alone.  Content-derived only: inputs are fingerprinted by
// hash, never by modification time, so identical runs emit identical bytes.
struct RunManifest {
    std::string command;
    nlohmann::ordered_json arguments = nlohmann::ordered_json::object();
    uint64_t seed = 0;
    std::vector<std::string> inputs;    // resolved paths in read order
    std::vector<std::string> overrides; // raw key=value strings
};

nlohmann::ordered_json manifest_to_json(const RunManifest& m);
void write_manifest(const std::string& out_dir, const RunManifest& m);

void ensure_dir(const std::string& path);

} // namespace epo
