#pragma once

#include "beantrap/geometry.hpp"
#include "beantrap/magnetics.hpp"
#include "beantrap/protocol.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace beantrap {

struct MapOutput {
    std::vector<std::size_t> endpoints;   // empty → every endpoint
    GridSpec grid;
    std::vector<double> contour_levels;   // µK above the trap bottom
};

struct OutputSettings {
    bool trajectory = true;
    bool minima = true;
    std::vector<std::size_t> profile_endpoints;
    std::optional<MapOutput> maps;
};

/// Parsed run-configuration file. Everything is converted to SI on load.
struct RunConfig {
    std::string name;
    LayoutDescription layout;
    ControlProtocol protocol;
    RunOptions options;
    double track_jump = 30e-6;
    OutputSettings outputs;
    std::string hash;  // SHA-256 of the canonical (re-serialized) JSON
};

/// Parses JSON text. Unknown keys, missing required keys and type errors are
/// reported as ConfigError with the key path.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Builds the layout and checks the protocol against it without running.
/// Rethrows any problem as ConfigError rooted at the offending section.
ChipLayout validate_config(const RunConfig& config);

}  // namespace beantrap
