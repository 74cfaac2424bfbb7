#include "beantrap/protocol.hpp"

#include "beantrap/error.hpp"
#include "beantrap/parallel.hpp"
#include "beantrap/units.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <set>

namespace beantrap {

namespace {

// Failure inside one replay, tagged with where it happened.
class ReplayFailure : public Error {
public:
    using Error::Error;
};

double lerp(double a, double b, int s, int n) {
    if (s >= n) return b;
    return a + (b - a) * (static_cast<double>(s) / static_cast<double>(n));
}

Controls apply_targets(const ChipLayout& layout, const Controls& from, const ControlTargets& t) {
    Controls c = from;
    for (const auto& [name, value] : t.currents) c.currents[layout.strip_index(name)] = value;
    if (t.b_x) c.bias.b_x = *t.b_x;
    if (t.b_y) c.bias.b_y = *t.b_y;
    if (t.b_z) c.bias.b_z = *t.b_z;
    return c;
}

struct Cursor {
    CriticalState state;
    Controls controls;
    RunDiagnostics diag;
    std::vector<ProfileSnapshot> profiles;
    bool record = false;
};

void ramp_to(Cursor& cur, const Controls& target, int substeps, std::size_t stage_index,
             const std::string& label, const ChipLayout& layout, const InductanceOperator& op,
             const RunOptions& options) {
    const Controls start = cur.controls;
    const int n = std::max(1, substeps > 0 ? substeps : options.substeps);
    for (int s = 1; s <= n; ++s) {
        Controls next = start;
        for (std::size_t i = 0; i < next.currents.size(); ++i)
            next.currents[i] = lerp(start.currents[i], target.currents[i], s, n);
        next.bias.b_x = lerp(start.bias.b_x, target.bias.b_x, s, n);
        next.bias.b_y = lerp(start.bias.b_y, target.bias.b_y, s, n);
        next.bias.b_z = lerp(start.bias.b_z, target.bias.b_z, s, n);
        if (cur.state.superconducting) {
            StepInput input;
            input.delta_a_ext = external_potential(layout, next.bias.b_y - cur.controls.bias.b_y);
            input.i_target = next.currents;
            try {
                auto outcome = step(layout, cur.state, input, op, options.solver);
                cur.state = std::move(outcome.state);
                cur.diag.absorb(outcome.diagnostics);
            } catch (const Error& e) {
                throw ReplayFailure(fmt::format("stage {} ({}) substep {}: {}", stage_index, label, s, e.what()));
            }
            if (cur.record) cur.profiles.push_back({stage_index, label, s, cur.state.k});
        }
        cur.controls = next;
    }
}

void apply_stage(Cursor& cur, const Stage& st, std::size_t index, const ChipLayout& layout,
                 const InductanceOperator& op, const RunOptions& options) {
    if (!st.enabled) return;
    switch (st.kind) {
        case Stage::Kind::set_normal:
            cur.state = transition_to_normal(cur.state);
            break;
        case Stage::Kind::field_cool: {
            if (cur.state.superconducting)
                throw ReplayFailure(fmt::format("stage {} ({}): field_cool on a superconducting film", index, st.label));
            cur.controls.bias.b_y = st.b_y_cool;
            try {
                cur.state = field_cool(layout, cur.state, st.b_y_cool, cur.controls.currents,
                                       CoolOptions{st.allow_transport_cool});
            } catch (const Error& e) {
                throw ReplayFailure(fmt::format("stage {} ({}): {}", index, st.label, e.what()));
            }
            break;
        }
        case Stage::Kind::ramp:
            ramp_to(cur, apply_targets(layout, cur.controls, st.targets), st.substeps, index, st.label, layout, op,
                    options);
            break;
        case Stage::Kind::hold:
            break;
    }
}

Cursor initial_cursor(const ChipLayout& layout) {
    Cursor c;
    c.state = CriticalState::normal(layout);
    c.controls.currents.assign(layout.strips().size(), 0.0);
    return c;
}

void check_transport(const ChipLayout& layout, const ControlTargets& t, const std::string& where) {
    for (const auto& [name, value] : t.currents) {
        const auto idx = layout.strip_index(name);
        const auto& s = layout.strips()[idx];
        if (!std::isfinite(value)) throw ValidationError(where + ": current for '" + name + "' is not finite");
        if (!s.carries_transport && value != 0.0)
            throw ValidationError(where + ": strip '" + name + "' carries no transport current");
        if (std::abs(value) > s.critical_current() * (1.0 + 1e-12))
            throw FeasibilityError(name, fmt::format("{}: {:.6g} A in strip '{}' would exceed its critical "
                                                     "current {:.6g} A",
                                                     where, value, name, s.critical_current()));
    }
}

}  // namespace

Stage Stage::set_normal(std::string label) {
    Stage s;
    s.kind = Kind::set_normal;
    s.label = std::move(label);
    return s;
}

Stage Stage::field_cool(double b_y, std::string label) {
    Stage s;
    s.kind = Kind::field_cool;
    s.b_y_cool = b_y;
    s.label = std::move(label);
    return s;
}

Stage Stage::ramp(ControlTargets targets, std::string label, int substeps) {
    Stage s;
    s.kind = Kind::ramp;
    s.targets = std::move(targets);
    s.label = std::move(label);
    s.substeps = substeps;
    return s;
}

Stage Stage::hold(std::string label) {
    Stage s;
    s.kind = Kind::hold;
    s.label = std::move(label);
    return s;
}

ControlTargets Sweep::endpoint(int j) const {
    const int n = std::max(1, count - 1);
    ControlTargets t;
    for (std::size_t i = 0; i < start.currents.size(); ++i)
        t.currents.emplace_back(start.currents[i].first,
                                lerp(start.currents[i].second, end.currents[i].second, j, n));
    if (start.b_x) t.b_x = lerp(*start.b_x, *end.b_x, j, n);
    if (start.b_y) t.b_y = lerp(*start.b_y, *end.b_y, j, n);
    if (start.b_z) t.b_z = lerp(*start.b_z, *end.b_z, j, n);
    if (count == 1) t = start;
    return t;
}

void ControlProtocol::validate(const ChipLayout& layout) const {
    bool superconducting = false;
    bool cooled_once = false;
    std::vector<double> currents(layout.strips().size(), 0.0);
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const Stage& st = stages[i];
        const std::string where = fmt::format("stage {} ({})", i, st.label);
        if (st.substeps < 0) throw ValidationError(where + ": substeps must be >= 1");
        if (!st.enabled) continue;
        switch (st.kind) {
            case Stage::Kind::set_normal:
                superconducting = false;
                break;
            case Stage::Kind::field_cool:
                if (superconducting)
                    throw ValidationError(where + ": field_cool requires a preceding set_normal");
                if (!st.allow_transport_cool)
                    for (std::size_t s = 0; s < currents.size(); ++s)
                        if (currents[s] != 0.0)
                            throw ValidationError(where + ": strip '" + layout.strips()[s].name +
                                                  "' carries current at the transition");
                if (!std::isfinite(st.b_y_cool)) throw ValidationError(where + ": cooling field is not finite");
                superconducting = true;
                cooled_once = true;
                break;
            case Stage::Kind::ramp:
                check_transport(layout, st.targets, where);
                for (const auto& [name, v] : st.targets.currents) currents[layout.strip_index(name)] = v;
                break;
            case Stage::Kind::hold:
                break;
        }
    }
    const bool has_ramps = std::any_of(stages.begin(), stages.end(), [](const Stage& s) {
        return s.enabled && s.kind == Stage::Kind::ramp;
    });
    if (!cooled_once && (has_ramps || sweep))
        throw ValidationError("protocol ramps currents or fields but never cools the film (no field_cool stage)");
    if (sweep) {
        if (sweep->count < 1) throw ValidationError("sweep.count must be >= 1");
        if (sweep->substeps < 0) throw ValidationError("sweep.substeps must be >= 1");
        if (!superconducting) throw ValidationError("sweep runs on a film in the normal state");
        const auto& a = sweep->start;
        const auto& b = sweep->end;
        bool same = a.b_x.has_value() == b.b_x.has_value() && a.b_y.has_value() == b.b_y.has_value() &&
                    a.b_z.has_value() == b.b_z.has_value() && a.currents.size() == b.currents.size();
        for (std::size_t i = 0; same && i < a.currents.size(); ++i)
            same = a.currents[i].first == b.currents[i].first;
        if (!same) throw ValidationError("sweep.start and sweep.end must set the same controls");
        check_transport(layout, a, "sweep.start");
        check_transport(layout, b, "sweep.end");
    }
}

void RunDiagnostics::absorb(const StepDiagnostics& d) {
    ++steps;
    qp_iterations += d.iterations;
    max_kkt = std::max(max_kkt, d.kkt_residual);
    max_box_ratio = std::max(max_box_ratio, d.max_box_ratio);
    max_current_error = std::max(max_current_error, d.max_current_error);
    min_energy_drop = std::max(min_energy_drop, d.objective);
}

void RunDiagnostics::merge(const RunDiagnostics& o) {
    steps += o.steps;
    qp_iterations += o.qp_iterations;
    max_kkt = std::max(max_kkt, o.max_kkt);
    max_box_ratio = std::max(max_box_ratio, o.max_box_ratio);
    max_current_error = std::max(max_current_error, o.max_current_error);
    min_energy_drop = std::max(min_energy_drop, o.min_energy_drop);
}

bool RunOutput::all_ok() const {
    return std::all_of(endpoints.begin(), endpoints.end(), [](const EndpointResult& e) { return e.ok; });
}

EndpointResult replay(const ControlProtocol& protocol, const ChipLayout& layout, const InductanceOperator& op,
                      const RunOptions& options, std::optional<ControlTargets> final_ramp) {
    EndpointResult r;
    Cursor cur = initial_cursor(layout);
    cur.record = !options.record_profiles.empty();
    try {
        for (std::size_t i = 0; i < protocol.stages.size(); ++i)
            apply_stage(cur, protocol.stages[i], i, layout, op, options);
        if (final_ramp) {
            const int sub = protocol.sweep ? protocol.sweep->substeps : 0;
            ramp_to(cur, apply_targets(layout, cur.controls, *final_ramp), sub, protocol.stages.size(), "sweep",
                    layout, op, options);
        }
        r.ok = true;
    } catch (const Error& e) {
        r.error = e.what();
    }
    r.state = std::move(cur.state);
    r.controls = std::move(cur.controls);
    r.diagnostics = cur.diag;
    r.profiles = std::move(cur.profiles);
    return r;
}

RunOutput run(const ControlProtocol& protocol, const ChipLayout& layout, const RunOptions& options) {
    protocol.validate(layout);
    const auto op = InductanceOperator::build(layout, options.reference_length);
    const std::size_t count = protocol.endpoint_count();
    const std::set<std::size_t> record(options.record_profiles.begin(), options.record_profiles.end());

    // Shared prefix: everything before the sweep.
    Cursor prefix = initial_cursor(layout);
    std::string prefix_error;
    if (options.prefix_cache) {
        prefix.record = !record.empty();
        try {
            for (std::size_t i = 0; i < protocol.stages.size(); ++i)
                apply_stage(prefix, protocol.stages[i], i, layout, op, options);
        } catch (const Error& e) {
            prefix_error = e.what();
        }
    }

    std::vector<std::size_t> selected = options.endpoints;
    if (selected.empty())
        for (std::size_t j = 0; j < count; ++j) selected.push_back(j);
    std::sort(selected.begin(), selected.end());
    selected.erase(std::unique(selected.begin(), selected.end()), selected.end());
    if (selected.back() >= count)
        throw ValidationError(fmt::format("endpoint {} requested but the protocol has {}", selected.back(), count));

    RunOutput out;
    out.endpoints.resize(selected.size());
    parallel_for(selected.size(), options.workers, [&](std::size_t slot) {
        const std::size_t j = selected[slot];
        EndpointResult& r = out.endpoints[slot];
        const bool want_profiles = record.count(j) > 0;
        std::optional<ControlTargets> final_ramp;
        if (protocol.sweep) final_ramp = protocol.sweep->endpoint(static_cast<int>(j));
        if (options.prefix_cache) {
            if (!prefix_error.empty()) {
                r.error = prefix_error;
            } else {
                Cursor cur = prefix;
                cur.record = want_profiles;
                if (!want_profiles) cur.profiles.clear();
                try {
                    if (final_ramp) {
                        const int sub = protocol.sweep->substeps;
                        ramp_to(cur, apply_targets(layout, cur.controls, *final_ramp), sub, protocol.stages.size(),
                                "sweep", layout, op, options);
                    }
                    r.ok = true;
                } catch (const Error& e) {
                    r.error = e.what();
                }
                r.state = std::move(cur.state);
                r.controls = std::move(cur.controls);
                r.diagnostics = cur.diag;
                r.profiles = std::move(cur.profiles);
            }
        } else {
            RunOptions local = options;
            if (!want_profiles) local.record_profiles.clear();
            r = replay(protocol, layout, op, local, final_ramp);
        }
        r.index = j;
        if (r.ok && options.analyze) {
            TrapAnalysisOptions trap = options.trap;
            trap.workers = 1;
            try {
                r.report = analyze_trap(layout, r.state, r.controls.bias, options.window, trap);
            } catch (const Error& e) {
                r.ok = false;
                r.error = fmt::format("trap analysis: {}", e.what());
            }
        }
    });
    return out;
}

std::vector<TrajectoryRow> trajectory_table(const RunOutput& out, double track_jump) {
    std::vector<TrajectoryRow> rows;
    struct Track {
        int id;
        double y, z;
    };
    std::vector<Track> previous;
    int next_id = 0;
    for (const auto& ep : out.endpoints) {
        if (!ep.ok) continue;
        const auto& minima = ep.report.minima;
        std::vector<int> ids(minima.size(), -1);
        struct Cand {
            double d;
            std::size_t prev, cur;
        };
        std::vector<Cand> cands;
        for (std::size_t p = 0; p < previous.size(); ++p)
            for (std::size_t c = 0; c < minima.size(); ++c) {
                const double d = std::hypot(previous[p].y - minima[c].y, previous[p].z - minima[c].z);
                if (d <= track_jump) cands.push_back({d, p, c});
            }
        std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.d < b.d; });
        std::vector<char> prev_used(previous.size(), 0);
        for (const auto& c : cands) {
            if (prev_used[c.prev] || ids[c.cur] >= 0) continue;
            prev_used[c.prev] = 1;
            ids[c.cur] = previous[c.prev].id;
        }
        std::vector<Track> current;
        for (std::size_t c = 0; c < minima.size(); ++c) {
            if (ids[c] < 0) ids[c] = next_id++;
            next_id = std::max(next_id, ids[c] + 1);
            current.push_back({ids[c], minima[c].y, minima[c].z});
            TrajectoryRow row;
            row.endpoint = ep.index;
            row.b_y_f = to_gauss(ep.controls.bias.b_y);
            row.b_z_f = to_gauss(ep.controls.bias.b_z);
            row.well = ids[c];
            row.y = to_um(minima[c].y);
            row.z = to_um(minima[c].z);
            row.u = minima[c].u;
            row.merged = ep.report.well_merged(c);
            row.leaking = ep.report.well_leaking(c);
            row.boundary = minima[c].boundary;
            rows.push_back(row);
        }
        previous = std::move(current);
    }
    return rows;
}

}  // namespace beantrap
