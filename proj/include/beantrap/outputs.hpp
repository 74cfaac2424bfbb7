#pragma once

#include "beantrap/config.hpp"
#include "beantrap/protocol.hpp"
#include "beantrap/trap.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace beantrap {

// endpoint,abs_By_G,By_G,Bz_G,well,y_um,z_um,U_uK,merged,leaking,boundary
void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows);

// endpoint,first,second,y_um,z_um,U_uK,barrier_uK,merged
void write_saddles_csv(std::ostream& out, const RunOutput& run);

// stage,label,substep,element,strip,z_um,K_A_per_m,saturated
void write_profiles_csv(std::ostream& out, const ChipLayout& layout, const std::vector<ProfileSnapshot>& profiles);

// level_uK,polyline,closed,point,y_um,z_um
void write_contours_csv(std::ostream& out, const std::vector<ContourSet>& contours);

/// Sets every ramp (stage and sweep) and the run default to `substeps`.
void override_substeps(ControlProtocol& protocol, RunOptions& options, int substeps);

struct Artifact {
    std::string file;    // relative to the output directory
    std::string kind;
    std::string sha256;
};

enum class ExecuteMode { run, map };

struct ExecuteOptions {
    ExecuteMode mode = ExecuteMode::run;
    std::optional<unsigned> workers;
    std::optional<int> substeps;  // applied to every ramp, see override_substeps
};

struct ExecuteResult {
    RunOutput output;
    std::vector<Artifact> artifacts;  // manifest.json excluded
    bool ok = false;
};

/// Runs a validated config and writes its artifacts plus manifest.json into
/// out_dir. In map mode only the endpoints with map output are simulated.
ExecuteResult execute(const RunConfig& config, const std::filesystem::path& out_dir,
                      const ExecuteOptions& options = {});

}  // namespace beantrap
