#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

namespace epo {

// Numeric formatting used in all emitted artifacts.  Reports and traces carry
// six significant digits; machine-readable exports that feed back into the
// tool (strategies, tables) keep seventeen so a round trip is lossless.
inline std::string fmt6(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", x);
    return buf;
}

inline std::string fmt17(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// FNV-1a over raw bytes; used for input fingerprints in run manifests.
inline uint64_t fnv1a(const std::string& bytes, uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Minimal CSV support: fields in this project never contain commas or quotes.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

} // namespace epo
