#pragma once

#include "beantrap/bean.hpp"
#include "beantrap/geometry.hpp"
#include "beantrap/magnetics.hpp"
#include "beantrap/trap.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace beantrap {

/// Partial assignment of control values; unset entries keep their value.
struct ControlTargets {
    std::vector<std::pair<std::string, double>> currents;  // strip name → A
    std::optional<double> b_x;  // T
    std::optional<double> b_y;
    std::optional<double> b_z;

    bool empty() const { return currents.empty() && !b_x && !b_y && !b_z; }
};

struct Stage {
    enum class Kind { set_normal, field_cool, ramp, hold };

    Kind kind = Kind::hold;
    std::string label;
    bool enabled = true;
    double b_y_cool = 0.0;       // field_cool: perpendicular field at T_c (T)
    bool allow_transport_cool = false;
    ControlTargets targets;      // ramp
    int substeps = 0;            // ramp; 0 → run default
    double duration_ms = 0.0;    // recorded only; the model is rate-independent

    static Stage set_normal(std::string label = "normal");
    static Stage field_cool(double b_y, std::string label = "cool");
    static Stage ramp(ControlTargets targets, std::string label = "ramp", int substeps = 0);
    static Stage hold(std::string label = "hold");
};

/// Family of final ramps: endpoint j of `count` ramps to
/// start + (end − start)·j/(count − 1).
struct Sweep {
    int count = 1;
    ControlTargets start;
    ControlTargets end;
    int substeps = 0;
    double duration_ms = 0.0;

    ControlTargets endpoint(int j) const;
};

struct ControlProtocol {
    std::vector<Stage> stages;
    std::optional<Sweep> sweep;

    std::size_t endpoint_count() const { return sweep ? static_cast<std::size_t>(sweep->count) : 1; }
    /// Structural checks against the layout (strip names, cooling order, substeps).
    void validate(const ChipLayout& layout) const;
};

struct Controls {
    std::vector<double> currents;  // per strip, A
    BiasField bias;
};

struct RunDiagnostics {
    int steps = 0;
    long qp_iterations = 0;
    double max_kkt = 0.0;
    double max_box_ratio = 0.0;
    double max_current_error = 0.0;
    double min_energy_drop = 0.0;   // most positive objective seen (should be <= 0)

    void absorb(const StepDiagnostics& d);
    void merge(const RunDiagnostics& o);
};

struct ProfileSnapshot {
    std::size_t stage = 0;
    std::string label;
    int substep = 0;
    Eigen::VectorXd k;
};

struct RunOptions {
    int substeps = 40;
    SolverOptions solver;
    double reference_length = 1.0;
    unsigned workers = 1;
    bool prefix_cache = true;
    bool analyze = true;
    SearchWindow window;
    TrapAnalysisOptions trap;
    std::vector<std::size_t> record_profiles;  // endpoint indices
    std::vector<std::size_t> endpoints;        // subset to run; empty → all
};

struct EndpointResult {
    std::size_t index = 0;
    bool ok = false;
    std::string error;            // "stage 3 (load) substep 12: ..." on failure
    Controls controls;
    CriticalState state;
    TrapReport report;
    RunDiagnostics diagnostics;
    std::vector<ProfileSnapshot> profiles;
};

struct RunOutput {
    std::vector<EndpointResult> endpoints;
    bool all_ok() const;
};

/// Replays the protocol once per sweep endpoint. With prefix_cache the
/// stages before the sweep are simulated once and shared.
RunOutput run(const ControlProtocol& protocol, const ChipLayout& layout, const RunOptions& options = {});

/// Replays a protocol to its end (no sweep) and returns the final state.
EndpointResult replay(const ControlProtocol& protocol, const ChipLayout& layout,
                      const InductanceOperator& op, const RunOptions& options,
                      std::optional<ControlTargets> final_ramp = std::nullopt);

struct TrajectoryRow {
    std::size_t endpoint = 0;
    double b_y_f = 0.0;   // G
    double b_z_f = 0.0;   // G
    int well = 0;
    double y = 0.0;       // µm
    double z = 0.0;       // µm
    double u = 0.0;       // µK
    bool merged = false;
    bool leaking = false;
    bool boundary = false;
};

/// One row per located minimum; wells carry ids across endpoints by
/// nearest-neighbour continuation, with a new id after a jump > track_jump.
std::vector<TrajectoryRow> trajectory_table(const RunOutput& out, double track_jump = 30e-6);

}  // namespace beantrap
