#include "beantrap/outputs.hpp"

#include "beantrap/error.hpp"
#include "beantrap/hash.hpp"
#include "beantrap/magnetics.hpp"
#include "beantrap/units.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace beantrap {

namespace {

using nlohmann::ordered_json;

const char* flag(bool b) { return b ? "1" : "0"; }

class ArtifactWriter {
public:
    explicit ArtifactWriter(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    void add(const std::string& file, const std::string& kind, const std::string& content) {
        write(file, content);
        artifacts_.push_back({file, kind, sha256_hex(content)});
    }

    void write(const std::string& file, const std::string& content) const {
        std::ofstream out(dir_ / file, std::ios::binary);
        if (!out) throw Error("cannot write " + (dir_ / file).string());
        out << content;
        if (!out) throw Error("write failed for " + (dir_ / file).string());
    }

    std::vector<Artifact>& artifacts() { return artifacts_; }

private:
    std::filesystem::path dir_;
    std::vector<Artifact> artifacts_;
};

std::string endpoint_tag(std::size_t j) { return fmt::format("ep{:03d}", j); }

ordered_json manifest(const RunConfig& config, const ChipLayout& layout, const RunOptions& opts,
                      const ExecuteResult& res, ExecuteMode mode) {
    ordered_json m;
    m["tool"] = "beantrap";
    m["mode"] = mode == ExecuteMode::run ? "run" : "map";
    m["config"] = {{"name", config.name}, {"sha256", config.hash}};
    m["layout"] = {{"sha256", layout.hash()},
                   {"elements", layout.size()},
                   {"element_width_um", to_um(layout.element_width())}};
    m["solver"] = {{"substeps", opts.substeps},
                   {"kkt_tolerance", opts.solver.kkt_tolerance},
                   {"inactive_eps", opts.solver.inactive_eps},
                   {"max_iterations", opts.solver.max_iterations},
                   {"reference_length_um", to_um(opts.reference_length)},
                   {"workers", opts.workers},
                   {"prefix_cache", opts.prefix_cache}};
    m["trap"] = {{"window_um",
                  {to_um(opts.window.y_min), to_um(opts.window.y_max), to_um(opts.window.z_min),
                   to_um(opts.window.z_max)}},
                 {"scan_spacing_um", to_um(opts.trap.minima.scan_spacing)},
                 {"refine_tolerance_um", to_um(opts.trap.minima.refine_tolerance)},
                 {"merge_distance_um", to_um(opts.trap.minima.merge_distance)},
                 {"merge_threshold_uK", opts.trap.saddle.merge_threshold},
                 {"g_mf", opts.trap.potential.g_mf},
                 {"gravity", opts.trap.potential.gravity},
                 {"track_jump_um", to_um(config.track_jump)}};

    RunDiagnostics total;
    std::size_t ok = 0;
    ordered_json failures = ordered_json::array();
    ordered_json per = ordered_json::array();
    for (const auto& ep : res.output.endpoints) {
        total.merge(ep.diagnostics);
        if (ep.ok) ++ok;
        else failures.push_back({{"endpoint", ep.index}, {"error", ep.error}});
        per.push_back({{"endpoint", ep.index},
                       {"ok", ep.ok},
                       {"steps", ep.diagnostics.steps},
                       {"qp_iterations", ep.diagnostics.qp_iterations},
                       {"max_kkt", ep.diagnostics.max_kkt},
                       {"max_box_ratio", ep.diagnostics.max_box_ratio},
                       {"max_current_error_A", ep.diagnostics.max_current_error},
                       {"minima", ep.report.minima.size()}});
    }
    m["endpoints"] = {{"requested", res.output.endpoints.size()}, {"ok", ok},
                      {"failed", res.output.endpoints.size() - ok}};
    m["residuals"] = {{"steps", total.steps},
                      {"qp_iterations", total.qp_iterations},
                      {"max_kkt", total.max_kkt},
                      {"max_box_ratio", total.max_box_ratio},
                      {"max_current_error_A", total.max_current_error},
                      {"max_step_objective_J_per_m", total.min_energy_drop}};
    m["failures"] = failures;
    m["per_endpoint"] = per;
    ordered_json files = ordered_json::array();
    for (const auto& a : res.artifacts) files.push_back({{"file", a.file}, {"kind", a.kind}, {"sha256", a.sha256}});
    m["outputs"] = files;
    return m;
}

}  // namespace

void override_substeps(ControlProtocol& protocol, RunOptions& options, int substeps) {
    if (substeps < 1) throw ValidationError("substeps override must be >= 1");
    options.substeps = substeps;
    for (auto& st : protocol.stages)
        if (st.kind == Stage::Kind::ramp) st.substeps = substeps;
    if (protocol.sweep) protocol.sweep->substeps = substeps;
}

void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows) {
    out << "endpoint,abs_By_G,By_G,Bz_G,well,y_um,z_um,U_uK,merged,leaking,boundary\n";
    for (const auto& r : rows)
        out << fmt::format("{},{:.6f},{:.6f},{:.6f},{},{:.4f},{:.4f},{:.6f},{},{},{}\n", r.endpoint,
                           std::abs(r.b_y_f), r.b_y_f, r.b_z_f, r.well, r.y, r.z, r.u, flag(r.merged),
                           flag(r.leaking), flag(r.boundary));
}

void write_saddles_csv(std::ostream& out, const RunOutput& run) {
    out << "endpoint,first,second,y_um,z_um,U_uK,barrier_uK,merged\n";
    for (const auto& ep : run.endpoints) {
        if (!ep.ok) continue;
        for (const auto& s : ep.report.saddles) {
            const double higher = std::max(ep.report.minima[s.first].u, ep.report.minima[s.second].u);
            out << fmt::format("{},{},{},{:.4f},{:.4f},{:.6f},{:.6f},{}\n", ep.index, s.first, s.second,
                               to_um(s.y), to_um(s.z), s.u, s.u - higher, flag(s.merged));
        }
    }
}

void write_profiles_csv(std::ostream& out, const ChipLayout& layout, const std::vector<ProfileSnapshot>& profiles) {
    out << "stage,label,substep,element,strip,z_um,K_A_per_m,saturated\n";
    const auto elems = layout.elements();
    for (const auto& p : profiles) {
        const auto sat = saturated_mask(layout, p.k);
        for (std::size_t i = 0; i < elems.size(); ++i)
            out << fmt::format("{},{},{},{},{},{:.4f},{:.9e},{}\n", p.stage, p.label, p.substep, i,
                               layout.strips()[elems[i].strip].name, to_um(elems[i].center_z),
                               p.k(static_cast<Eigen::Index>(i)), flag(sat[i]));
    }
}

void write_contours_csv(std::ostream& out, const std::vector<ContourSet>& contours) {
    out << "level_uK,polyline,closed,point,y_um,z_um\n";
    for (const auto& set : contours)
        for (std::size_t p = 0; p < set.polylines.size(); ++p) {
            const auto& line = set.polylines[p];
            for (std::size_t i = 0; i < line.points.size(); ++i)
                out << fmt::format("{:.6f},{},{},{},{:.4f},{:.4f}\n", set.level, p, flag(line.closed), i,
                                   to_um(line.points[i].first), to_um(line.points[i].second));
        }
}

ExecuteResult execute(const RunConfig& config, const std::filesystem::path& out_dir,
                      const ExecuteOptions& options) {
    const ChipLayout layout = validate_config(config);
    RunOptions opts = config.options;
    ControlProtocol protocol = config.protocol;
    if (options.workers) opts.workers = *options.workers;
    if (options.substeps) override_substeps(protocol, opts, *options.substeps);
    const auto& maps = config.outputs.maps;
    const std::size_t count = config.protocol.endpoint_count();
    std::set<std::size_t> map_endpoints;
    if (maps) {
        if (maps->endpoints.empty())
            for (std::size_t j = 0; j < count; ++j) map_endpoints.insert(j);
        else
            map_endpoints.insert(maps->endpoints.begin(), maps->endpoints.end());
    }
    if (options.mode == ExecuteMode::map) {
        if (!maps) throw ConfigError("outputs.maps", "map mode needs an outputs.maps section");
        opts.endpoints.assign(map_endpoints.begin(), map_endpoints.end());
        opts.record_profiles.clear();
    }

    ExecuteResult res;
    res.output = run(protocol, layout, opts);
    res.ok = res.output.all_ok();
    ArtifactWriter writer(out_dir);

    if (options.mode == ExecuteMode::run) {
        if (config.outputs.trajectory) {
            std::ostringstream s;
            write_trajectory_csv(s, trajectory_table(res.output, config.track_jump));
            writer.add("trajectory.csv", "trajectory", s.str());
        }
        if (config.outputs.minima) {
            std::ostringstream s;
            write_saddles_csv(s, res.output);
            writer.add("saddles.csv", "saddles", s.str());
        }
        for (const auto& ep : res.output.endpoints) {
            if (ep.profiles.empty()) continue;
            std::ostringstream s;
            write_profiles_csv(s, layout, ep.profiles);
            writer.add("profiles_" + endpoint_tag(ep.index) + ".csv", "profiles", s.str());
        }
    }
    if (maps) {
        for (const auto& ep : res.output.endpoints) {
            if (!ep.ok || !map_endpoints.count(ep.index)) continue;
            const FieldMap fm = field_map(layout, ep.state, ep.controls.bias, maps->grid, opts.workers);
            std::ostringstream s;
            write_field_map_csv(s, fm);
            writer.add("map_" + endpoint_tag(ep.index) + ".csv", "field_map", s.str());
            if (!maps->contour_levels.empty()) {
                const PotentialGrid pg = potential_from_map(fm, opts.trap.potential);
                const double bottom = ep.report.minima.empty() ? pg.min() : ep.report.reference_u;
                std::ostringstream c;
                write_contours_csv(c, equipotential_contours(pg, maps->contour_levels, bottom));
                writer.add("contours_" + endpoint_tag(ep.index) + ".csv", "contours", c.str());
            }
        }
    }
    res.artifacts = writer.artifacts();
    writer.write("manifest.json", manifest(config, layout, opts, res, options.mode).dump(2) + "\n");
    return res;
}

}  // namespace beantrap
