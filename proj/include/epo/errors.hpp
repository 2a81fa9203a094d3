#pragma once

#include <stdexcept>
#include <string>

namespace epo {

// Malformed or inconsistent input documents (scenario files, records, tables).
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// A queue term was requested in strict mode while demand meets or exceeds capacity.
struct SaturatedError : std::runtime_error {
    explicit SaturatedError(const std::string& what) : std::runtime_error(what) {}
};

// Operation preconditions violated at the API boundary (dead branch, off-grid
// threshold, degenerate accuracy range and similar).
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace epo
