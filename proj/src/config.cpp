#include "beantrap/config.hpp"

#include "beantrap/error.hpp"
#include "beantrap/hash.hpp"
#include "beantrap/units.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace beantrap {

namespace {

using nlohmann::json;

// Object view that remembers which keys were read, so leftovers can be
// reported as unknown.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_empty() ? "<root>" : path_, "expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }
    std::string at(const std::string& key) const { return path_empty() ? key : path_ + "." + key; }

    const json& raw(const std::string& key) {
        used_.insert(key);
        if (!j_.contains(key)) throw ConfigError(at(key), "required key is missing");
        return j_.at(key);
    }

    double number(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_number()) throw ConfigError(at(key), "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ConfigError(at(key), "value is not finite");
        return d;
    }
    double number(const std::string& key, double fallback) { return has(key) ? number(key) : touch(key, fallback); }

    double positive(const std::string& key, double fallback) {
        const double d = number(key, fallback);
        if (!(d > 0.0)) throw ConfigError(at(key), fmt::format("must be positive, got {}", d));
        return d;
    }

    long integer(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_number_integer()) throw ConfigError(at(key), "expected an integer");
        return v.get<long>();
    }
    long integer(const std::string& key, long fallback) { return has(key) ? integer(key) : touch(key, fallback); }

    bool boolean(const std::string& key, bool fallback) {
        if (!has(key)) return touch(key, fallback);
        const json& v = raw(key);
        if (!v.is_boolean()) throw ConfigError(at(key), "expected true or false");
        return v.get<bool>();
    }

    std::string text(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_string()) throw ConfigError(at(key), "expected a string");
        return v.get<std::string>();
    }
    std::string text(const std::string& key, const std::string& fallback) {
        return has(key) ? text(key) : touch(key, fallback);
    }

    Section child(const std::string& key) { return Section(raw(key), at(key)); }

    const json& array(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_array()) throw ConfigError(at(key), "expected an array");
        return v;
    }

    std::vector<double> numbers(const std::string& key) {
        std::vector<double> out;
        const json& v = array(key);
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) throw ConfigError(fmt::format("{}[{}]", at(key), i), "expected a number");
            out.push_back(v[i].get<double>());
        }
        return out;
    }

    std::vector<std::size_t> indices(const std::string& key) {
        std::vector<std::size_t> out;
        const json& v = array(key);
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number_unsigned())
                throw ConfigError(fmt::format("{}[{}]", at(key), i), "expected a non-negative integer");
            out.push_back(v[i].get<std::size_t>());
        }
        return out;
    }

    void forbid(const std::string& key, const std::string& why) const {
        if (has(key)) throw ConfigError(at(key), why);
    }

    // Rejects every key that was never read.
    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key())) throw ConfigError(at(it.key()), "unknown key");
    }

private:
    template <class T>
    T touch(const std::string& key, T v) {
        used_.insert(key);
        return v;
    }
    bool path_empty() const { return path_.empty(); }

    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

LayoutDescription parse_layout(Section s) {
    LayoutDescription d;
    d.element_width = from_um(s.positive("element_width_um", 3.0));
    const json& strips = s.array("strips");
    if (strips.empty()) throw ConfigError(s.at("strips"), "at least one strip is required");
    for (std::size_t i = 0; i < strips.size(); ++i) {
        Section t(strips[i], fmt::format("{}[{}]", s.at("strips"), i));
        Strip st;
        st.name = t.text("name");
        if (st.name.empty()) throw ConfigError(t.at("name"), "must not be empty");
        st.center_z = from_um(t.number("center_z_um"));
        st.width = from_um(t.number("width_um"));
        st.k_c = t.number("k_c_mA_per_um") * kMilliAmpPerMicron;
        st.carries_transport = t.boolean("carries_transport", true);
        t.finish();
        d.strips.push_back(std::move(st));
    }
    s.finish();
    return d;
}

void parse_bias(Section b, ControlTargets& t) {
    if (b.has("x")) t.b_x = from_gauss(b.number("x"));
    if (b.has("y")) t.b_y = from_gauss(b.number("y"));
    if (b.has("z")) t.b_z = from_gauss(b.number("z"));
    b.finish();
}

void parse_currents(Section c, const json& raw, ControlTargets& t) {
    for (auto it = raw.begin(); it != raw.end(); ++it) t.currents.emplace_back(it.key(), c.number(it.key()));
    c.finish();
}

ControlTargets parse_targets(Section& s) {
    ControlTargets t;
    if (s.has("currents_A")) parse_currents(s.child("currents_A"), s.raw("currents_A"), t);
    if (s.has("bias_G")) parse_bias(s.child("bias_G"), t);
    return t;
}

int parse_substeps(Section& s) {
    if (!s.has("substeps")) return 0;
    const long n = s.integer("substeps");
    if (n < 1) throw ConfigError(s.at("substeps"), fmt::format("must be >= 1, got {}", n));
    return static_cast<int>(n);
}

double parse_duration(Section& s) {
    const double d = s.number("duration_ms", 0.0);
    if (d < 0.0) throw ConfigError(s.at("duration_ms"), "must not be negative");
    return d;
}

Stage parse_stage(Section s) {
    const std::string kind = s.text("kind");
    Stage st;
    if (kind == "set_normal") {
        st.kind = Stage::Kind::set_normal;
    } else if (kind == "field_cool") {
        st.kind = Stage::Kind::field_cool;
        st.b_y_cool = from_gauss(s.number("b_y_t_G"));
        st.allow_transport_cool = s.boolean("allow_transport", false);
    } else if (kind == "ramp") {
        st.kind = Stage::Kind::ramp;
        st.targets = parse_targets(s);
        if (st.targets.empty()) throw ConfigError(s.at("kind"), "ramp sets neither currents_A nor bias_G");
        st.substeps = parse_substeps(s);
        st.duration_ms = parse_duration(s);
    } else if (kind == "hold") {
        st.kind = Stage::Kind::hold;
        st.duration_ms = parse_duration(s);
    } else {
        throw ConfigError(s.at("kind"), "expected one of set_normal, field_cool, ramp, hold; got '" + kind + "'");
    }
    st.label = s.text("label", kind);
    st.enabled = s.boolean("enabled", true);
    s.finish();
    return st;
}

Sweep parse_sweep(Section s) {
    Sweep sw;
    const long count = s.integer("count");
    if (count < 1) throw ConfigError(s.at("count"), "must be >= 1");
    sw.count = static_cast<int>(count);
    {
        Section a = s.child("start");
        sw.start = parse_targets(a);
        a.finish();
    }
    {
        Section b = s.child("end");
        sw.end = parse_targets(b);
        b.finish();
    }
    sw.substeps = parse_substeps(s);
    sw.duration_ms = parse_duration(s);
    s.finish();
    return sw;
}

ControlProtocol parse_protocol(Section s) {
    ControlProtocol p;
    const json& stages = s.array("stages");
    for (std::size_t i = 0; i < stages.size(); ++i)
        p.stages.push_back(parse_stage(Section(stages[i], fmt::format("{}[{}]", s.at("stages"), i))));
    if (s.has("sweep")) p.sweep = parse_sweep(s.child("sweep"));
    s.finish();
    return p;
}

void parse_solver(Section s, RunOptions& o) {
    const long n = s.integer("substeps", o.substeps);
    if (n < 1) throw ConfigError(s.at("substeps"), "must be >= 1");
    o.substeps = static_cast<int>(n);
    o.solver.kkt_tolerance = s.positive("kkt_tolerance", o.solver.kkt_tolerance);
    o.solver.inactive_eps = s.positive("inactive_eps", o.solver.inactive_eps);
    const long it = s.integer("max_iterations", 0);
    if (it < 0) throw ConfigError(s.at("max_iterations"), "must not be negative");
    o.solver.max_iterations = static_cast<int>(it);
    o.reference_length = from_um(s.positive("reference_length_um", to_um(o.reference_length)));
    const long w = s.integer("workers", 1);
    if (w < 1) throw ConfigError(s.at("workers"), "must be >= 1");
    o.workers = static_cast<unsigned>(w);
    o.prefix_cache = s.boolean("prefix_cache", true);
    s.finish();
}

GridSpec parse_grid(Section s, bool with_spacing) {
    GridSpec g;
    g.y_min = from_um(s.number("y_min"));
    g.y_max = from_um(s.number("y_max"));
    g.z_min = from_um(s.number("z_min"));
    g.z_max = from_um(s.number("z_max"));
    if (with_spacing) g.spacing = from_um(s.positive("spacing", 2.0));
    if (g.y_max < g.y_min) throw ConfigError(s.at("y_max"), "is below y_min");
    if (g.z_max < g.z_min) throw ConfigError(s.at("z_max"), "is below z_min");
    s.finish();
    return g;
}

std::vector<double> parse_levels(Section& s, const std::string& key) {
    auto levels = s.numbers(key);
    for (std::size_t i = 0; i < levels.size(); ++i)
        if (!(levels[i] > 0.0)) throw ConfigError(fmt::format("{}[{}]", s.at(key), i), "levels must be positive");
    return levels;
}

void parse_trap(Section s, RunConfig& c) {
    auto& o = c.options;
    if (s.has("window_um")) {
        const GridSpec g = parse_grid(s.child("window_um"), false);
        if (!(g.y_min > 0.0)) throw ConfigError(s.at("window_um.y_min"), "window must lie above the film (y > 0)");
        o.window = {g.y_min, g.y_max, g.z_min, g.z_max};
    }
    o.trap.minima.scan_spacing = from_um(s.positive("scan_spacing_um", 2.0));
    o.trap.minima.refine_tolerance = from_um(s.positive("refine_tolerance_um", 0.05));
    o.trap.minima.merge_distance = from_um(s.positive("merge_distance_um", 5.0));
    o.trap.saddle.merge_threshold = s.positive("merge_threshold_uK", 1.0);
    o.trap.saddle.level_tolerance = s.positive("saddle_tolerance_uK", 1e-4);
    o.trap.potential.g_mf = s.positive("g_mf", 1.0);
    o.trap.potential.gravity = s.boolean("gravity", false);
    c.track_jump = from_um(s.positive("track_jump_um", 30.0));
    if (s.has("contour_levels_uK")) o.trap.contour_levels = parse_levels(s, "contour_levels_uK");
    s.finish();
}

void parse_outputs(Section s, OutputSettings& out) {
    out.trajectory = s.boolean("trajectory", true);
    out.minima = s.boolean("minima", true);
    if (s.has("profile_endpoints")) out.profile_endpoints = s.indices("profile_endpoints");
    if (s.has("maps")) {
        Section m = s.child("maps");
        MapOutput mo;
        if (m.has("endpoints")) mo.endpoints = m.indices("endpoints");
        mo.grid = parse_grid(m.child("grid_um"), true);
        mo.contour_levels = m.has("contour_levels_uK") ? parse_levels(m, "contour_levels_uK")
                                                        : std::vector<double>{5.0, 30.0};
        m.finish();
        out.maps = std::move(mo);
    }
    s.finish();
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
    }
    Section s(root, "");
    RunConfig c;
    c.name = s.text("name");
    c.layout = parse_layout(s.child("layout"));
    c.protocol = parse_protocol(s.child("protocol"));
    if (s.has("solver")) parse_solver(s.child("solver"), c.options);
    if (s.has("trap")) parse_trap(s.child("trap"), c);
    if (s.has("outputs")) parse_outputs(s.child("outputs"), c.outputs);
    s.finish();
    c.options.record_profiles = c.outputs.profile_endpoints;
    c.hash = sha256_hex(root.dump());
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("<file>", "cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

ChipLayout validate_config(const RunConfig& config) {
    ChipLayout layout;
    try {
        layout = ChipLayout::build(config.layout);
    } catch (const Error& e) {
        throw ConfigError("layout.strips", e.what());
    }
    try {
        config.protocol.validate(layout);
    } catch (const Error& e) {
        throw ConfigError("protocol", e.what());
    }
    const std::size_t n = config.protocol.endpoint_count();
    for (const auto i : config.outputs.profile_endpoints)
        if (i >= n) throw ConfigError("outputs.profile_endpoints", fmt::format("endpoint {} out of range (< {})", i, n));
    if (config.outputs.maps) {
        for (const auto i : config.outputs.maps->endpoints)
            if (i >= n) throw ConfigError("outputs.maps.endpoints", fmt::format("endpoint {} out of range (< {})", i, n));
        try {
            config.outputs.maps->grid.validate();
        } catch (const Error& e) {
            throw ConfigError("outputs.maps.grid_um", e.what());
        }
    }
    return layout;
}

}  // namespace beantrap
