#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace disparity {

// Input or configuration problems the caller can fix. The CLI maps this
// to exit code 2.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Formula or file syntax problems; carries a character/line position.
struct ParseError : std::runtime_error {
    std::size_t pos;
    ParseError(const std::string& msg, std::size_t position)
        : std::runtime_error(msg + " (at position " + std::to_string(position) + ")"),
          pos(position) {}
};

// Sampler failures (exit code 3).
struct SamplerError : std::runtime_error {
    explicit SamplerError(const std::string& msg) : std::runtime_error(msg) {}
};

// A required upstream output is absent (exit code 4).
struct MissingArtifact : std::runtime_error {
    explicit MissingArtifact(const std::string& path)
        : std::runtime_error("missing artifact: " + path), missing_path(path) {}
    std::string missing_path;
};

}  // namespace disparity
