#include "beantrap/config.hpp"
#include "beantrap/magnetics.hpp"
#include "beantrap/oracle.hpp"
#include "beantrap/outputs.hpp"
#include "beantrap/units.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace beantrap;

namespace {

const std::filesystem::path kConfigs = std::filesystem::path(BEANTRAP_SOURCE_DIR) / "configs";
const std::vector<std::string> kShipped{"trajectory1", "trajectory2_cool0G", "trajectory2_coolm3G", "surface-maps"};

constexpr double kKc = 45e3;

struct Verdict {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

RunConfig config(const std::string& name) { return load_config(kConfigs / (name + ".json")); }

struct Run {
    RunConfig cfg;
    ChipLayout layout;
    RunOutput out;
    std::vector<TrajectoryRow> rows;
    double seconds = 0.0;
};

Run simulate(RunConfig cfg, std::optional<int> substeps = std::nullopt) {
    ChipLayout layout = validate_config(cfg);
    if (substeps) override_substeps(cfg.protocol, cfg.options, *substeps);
    const auto t0 = std::chrono::steady_clock::now();
    RunOutput out = run(cfg.protocol, layout, cfg.options);
    const double secs = seconds_since(t0);
    auto rows = trajectory_table(out, cfg.track_jump);
    return {std::move(cfg), std::move(layout), std::move(out), std::move(rows), secs};
}

// The well present at the first endpoint, followed by id until it is lost:
// missing, boundary-flagged, or leaking to the window edge.
struct Track {
    std::vector<const TrajectoryRow*> rows;  // one per endpoint while alive
    std::optional<std::size_t> lost_at;
    double approach = 0.0;                   // µm, height at the last endpoint before the loss
};

Track track_initial_well(const Run& r) {
    Track t;
    std::optional<int> id;
    for (const auto& row : r.rows)
        if (row.endpoint == r.out.endpoints.front().index && !row.boundary) {
            id = row.well;
            break;
        }
    if (!id) {
        t.lost_at = 0;
        return t;
    }
    for (const auto& ep : r.out.endpoints) {
        const TrajectoryRow* hit = nullptr;
        for (const auto& row : r.rows)
            if (row.endpoint == ep.index && row.well == *id) hit = &row;
        if (!hit || hit->boundary || hit->leaking) {
            t.lost_at = ep.index;
            break;
        }
        t.rows.push_back(hit);
    }
    if (!t.rows.empty()) t.approach = t.rows.back()->y;
    return t;
}

std::size_t inner_wells(const TrapReport& rep) {
    return static_cast<std::size_t>(
        std::count_if(rep.minima.begin(), rep.minima.end(), [](const TrapMinimum& m) { return !m.boundary; }));
}

bool any_merged(const TrapReport& rep) {
    for (std::size_t i = 0; i < rep.minima.size(); ++i)
        if (!rep.minima[i].boundary && rep.well_merged(i)) return true;
    return false;
}

std::string pass_word(bool b) { return b ? "yes" : "no"; }

Verdict criterion1() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto c = compare_with_solver(StripAnalyticCase::field(20e-6, kKc, 0.5 * characteristic_field(kKc)), 3e-6, 1);
    const double secs = seconds_since(t0);
    const double dfront = std::abs(c.front_numeric - c.front_analytic);
    const bool ok = c.l2_error < 0.03 && dfront <= 3e-6 && secs < 1.0;
    return {ok, fmt::format("L2 {:.4f} (limit 0.03; element-average L2 {:.4f}) | front {:.3f} um vs {:.3f} um, "
                            "off by {:.3f} um (limit 3) | {:.3f} s (limit 1)",
                            c.l2_error, c.l2_error_average, to_um(c.front_numeric), to_um(c.front_analytic),
                            to_um(dfront), secs)};
}

Verdict criterion2() {
    const auto c = compare_with_solver(StripAnalyticCase::transport(20e-6, kKc, 1.34), 3e-6, 1);
    const double err = std::abs(c.current_numeric - 1.34);
    const bool front_ok = std::abs(to_um(c.front_numeric) - 13.35) <= 1.5;
    const bool ok = front_ok && err <= 1e-9;
    return {ok, fmt::format("saturation front {:.3f} um (closed form {:.3f}, target 13.35 +- 1.5) | "
                            "current error {:.3e} A (limit 1e-9)",
                            to_um(c.front_numeric), to_um(c.front_analytic), err)};
}

Verdict criterion3() {
    bool ok = true;
    std::string detail;
    for (const auto& name : kShipped) {
        auto cfg = config(name);
        cfg.options.workers = std::clamp(std::thread::hardware_concurrency(), 1u, 4u);
        const auto r = simulate(std::move(cfg));
        RunDiagnostics d;
        bool all_ok = true;
        for (const auto& ep : r.out.endpoints) {
            d.merge(ep.diagnostics);
            all_ok = all_ok && ep.ok;
        }
        const bool this_ok = all_ok && d.max_box_ratio <= 1.0 + 1e-9 && d.max_current_error <= 1e-9 &&
                             d.max_kkt <= 1e-8 && r.seconds < 600.0;
        ok = ok && this_ok;
        detail += fmt::format("{}{}: {} endpoints, box {:.12f}, current {:.2e} A, kkt {:.2e}, {:.1f} s",
                              detail.empty() ? "" : " | ", name, r.out.endpoints.size(), d.max_box_ratio,
                              d.max_current_error, d.max_kkt, r.seconds);
    }
    return {ok, detail};
}

double rel_l2(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).norm() / b.norm(); }

Verdict criterion4() {
    // return-point memory on the loaded chip: B_y 0 → 8 → 3 → 8 G
    const auto layout = default_chip_layout();
    const auto op = InductanceOperator::build(layout);
    CriticalState s = field_cool(layout, CriticalState::normal(layout), 0.0, {0.0, 0.0});
    double b = 0.0;
    auto ramp = [&](double to, std::vector<double> i, int n) {
        for (int k = 1; k <= n; ++k) {
            const double bk = b + (to - b) / (n - k + 1);
            s = step(layout, s, {external_potential(layout, bk - b), i}, op).state;
            b = bk;
        }
    };
    ramp(0.0, {-1.34, 0.0}, 1);
    ramp(from_gauss(8.0), {-1.34, 0.0}, 40);
    const Eigen::VectorXd k1 = s.k;
    ramp(from_gauss(3.0), {-1.34, 0.0}, 40);
    const double excursion = rel_l2(s.k, k1);
    ramp(from_gauss(8.0), {-1.34, 0.0}, 40);
    const double rpm = rel_l2(s.k, k1);

    // history followed by a normal transition must leave no trace
    const auto virgin_cfg = config("trajectory2_coolm3G");
    auto history_cfg = virgin_cfg;
    ControlTargets excursion_t;
    excursion_t.currents = {{"Z", 1.0}, {"U", 3.0}};
    excursion_t.b_y = from_gauss(-7.0);
    ControlTargets off;
    off.currents = {{"Z", 0.0}, {"U", 0.0}};
    off.b_y = 0.0;
    const std::vector<Stage> before{Stage::set_normal("warm0"), Stage::field_cool(from_gauss(5.0), "cool0"),
                                    Stage::ramp(excursion_t, "excursion", 20), Stage::ramp(off, "off", 5)};
    auto& st = history_cfg.protocol.stages;
    st.insert(st.begin(), before.begin(), before.end());
    const auto a = simulate(virgin_cfg);
    const auto h = simulate(history_cfg);
    std::ostringstream sa, sh;
    write_trajectory_csv(sa, a.rows);
    write_trajectory_csv(sh, h.rows);
    const bool identical = sa.str() == sh.str();
    const bool ok = rpm < 1e-6 && identical && a.out.all_ok();
    return {ok, fmt::format("return-point L2 {:.2e} (limit 1e-6; excursion moved the state by {:.2e}) | "
                            "post-reset trajectory bit-identical: {} ({} rows)",
                            rpm, excursion, pass_word(identical), a.rows.size())};
}

Verdict criterion5() {
    const auto r = simulate(config("trajectory1"));
    // endpoint nearest to (10.1, 2.7) G
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t j = 0; j < r.out.endpoints.size(); ++j) {
        const auto& bias = r.out.endpoints[j].controls.bias;
        const double d = std::hypot(to_gauss(bias.b_y) - 10.1, to_gauss(bias.b_z) - 2.7);
        if (d < best_d) best_d = d, best = j;
    }
    const auto& ep = r.out.endpoints[best];
    const std::size_t wells = inner_wells(ep.report);
    double yc = 0.0;
    for (const auto& m : ep.report.minima)
        if (!m.boundary) {
            yc = to_um(m.y);
            break;
        }
    const bool at_point = wells == 1 && std::abs(yc - 81.7) <= 15.0;

    const auto t = track_initial_well(r);
    bool monotone = true;
    double peak_y = -1.0, peak_b = 0.0, prev = 1e300;
    std::size_t considered = 0;
    for (const auto* row : t.rows) {
        if (std::abs(row->b_y_f) < 2.0 - 1e-9) continue;
        ++considered;
        if (row->y > peak_y) peak_y = row->y, peak_b = row->b_y_f;
        if (row->y >= prev) monotone = false;
        prev = row->y;
    }
    const bool ok = at_point && monotone && considered > 1;
    return {ok, fmt::format("endpoint {} at ({:.3f}, {:.3f}) G: {} well(s), y_c = {:.2f} um (target 81.7 +- 15) | "
                            "y_c monotone decreasing on [2, 14.1] G: {} (max {:.1f} um at {:.3f} G over {} endpoints)",
                            ep.index, to_gauss(ep.controls.bias.b_y), to_gauss(ep.controls.bias.b_z), wells, yc,
                            pass_word(monotone), peak_y, peak_b, considered)};
}

Verdict criterion6() {
    const auto zero = simulate(config("trajectory2_cool0G"));
    const auto one = simulate(config("trajectory1"));
    const auto tz = track_initial_well(zero);
    const auto t1 = track_initial_well(one);
    auto describe = [](const Run& r, const Track& t) {
        if (!t.lost_at) return std::string("never lost");
        const auto& bias = r.out.endpoints[*t.lost_at].controls.bias;
        return fmt::format("lost at endpoint {} (|B_y,f| = {:.3f} G), approach {:.1f} um", *t.lost_at,
                           std::abs(to_gauss(bias.b_y)), t.approach);
    };
    double t1_min = 1e300;
    for (const auto* row : t1.rows) t1_min = std::min(t1_min, row->y);
    const bool zero_ok = tz.lost_at && std::abs(tz.approach - 140.0) <= 30.0;
    const bool contrast = t1_min < 90.0 && tz.approach > t1_min;
    return {zero_ok && contrast,
            fmt::format("cooled at 0 G: {} (target 140 +- 30) | trajectory 1: {}, closest {:.1f} um (limit < 90)",
                        describe(zero, tz), describe(one, t1), t1_min)};
}

Verdict criterion7() {
    const auto r = simulate(config("trajectory2_coolm3G"));
    bool two_everywhere = true;
    std::optional<std::size_t> first_short, first_merge;
    for (const auto& ep : r.out.endpoints) {
        if (inner_wells(ep.report) < 2 && !first_short) {
            two_everywhere = false;
            first_short = ep.index;
        }
        if (!first_merge && any_merged(ep.report)) first_merge = ep.index;
    }
    auto by = [&](std::size_t j) { return std::abs(to_gauss(r.out.endpoints[j].controls.bias.b_y)); };
    const bool merge_ok = first_merge && std::abs(by(*first_merge) - 6.0) <= 1.5;
    double min_barrier = 1e300, min_barrier_b = 0.0;
    for (const auto& ep : r.out.endpoints)
        for (const auto& s : ep.report.saddles) {
            const auto& a = ep.report.minima[s.first];
            const auto& b = ep.report.minima[s.second];
            if (a.boundary || b.boundary) continue;
            const double barrier = s.u - std::max(a.u, b.u);
            if (barrier < min_barrier) min_barrier = barrier, min_barrier_b = std::abs(to_gauss(ep.controls.bias.b_y));
        }
    std::string short_note = "yes";
    if (first_short) {
        const auto& rep = r.out.endpoints[*first_short].report;
        short_note = fmt::format("no (from endpoint {}, |B_y,f| = {:.3f} G, {} well(s) above the surface)",
                                 *first_short, by(*first_short), inner_wells(rep));
    }
    return {two_everywhere && merge_ok,
            fmt::format("two minima above the surface at every endpoint: {} | first merge flag at {} "
                        "(target 6 +- 1.5 G) | lowest barrier {:.3f} uK at {:.3f} G",
                        short_note,
                        first_merge ? fmt::format("|B_y,f| = {:.3f} G", by(*first_merge)) : std::string("none"),
                        min_barrier, min_barrier_b)};
}

Verdict criterion8() {
    bool ok = true;
    double worst_amp = 0.0;
    std::size_t nodes = 0;
    std::map<std::string, bool> seen;
    for (const auto& name : kShipped) {
        auto cfg = config(name);
        const auto layout = validate_config(cfg);
        if (seen.count(layout.hash())) continue;
        seen[layout.hash()] = true;
        cfg.options.endpoints = {0};
        cfg.options.analyze = false;
        const auto out = run(cfg.protocol, layout, cfg.options);
        const auto& k = out.endpoints.at(0).state.k;
        const auto i = strip_currents(layout, k);
        double i_abs = 0.0;
        for (double v : i) i_abs = std::max(i_abs, std::abs(v));
        for (std::size_t s = 0; s < layout.strips().size(); ++s) {
            const auto& st = layout.strips()[s];
            const double c = circulation(layout, k, out.endpoints[0].controls.bias, -10e-6, 10e-6, st.left() - 10e-6,
                                         st.right() + 10e-6) / kMu0;
            worst_amp = std::max(worst_amp, std::abs(c - i[s]) / i_abs);
        }
        const auto& first = layout.strips().front();
        const auto& last = layout.strips().back();
        const double all = circulation(layout, k, {}, -40e-6, 80e-6, first.left() - 30e-6, last.right() + 30e-6) / kMu0;
        double total = 0.0;
        for (double v : i) total += v;
        worst_amp = std::max(worst_amp, std::abs(all - total) / i_abs);

        const auto bias = BiasField::from_gauss(-3.0, 1.7, 9.4);
        const GridSpec g{2e-6, 400e-6, -300e-6, 500e-6, 8e-6};
        const auto fm = field_map(layout, CriticalState::normal(layout), bias, g);
        for (const auto& b : fm.b) {
            ++nodes;
            if (b.x != bias.b_x || b.y != bias.b_y || b.z != bias.b_z) ok = false;
        }
    }
    ok = ok && worst_amp <= 1e-3;
    return {ok, fmt::format("{} distinct layout(s): Ampere worst relative error {:.2e} (limit 1e-3, 1280 nodes "
                            "per side) | bias-only map exact at {} nodes: {}",
                            seen.size(), worst_amp, nodes, pass_word(ok))};
}

Verdict criterion9() {
    bool ok = true;
    std::string detail;
    for (const auto& name : {"trajectory1", "trajectory2_cool0G", "trajectory2_coolm3G"}) {
        const auto base = simulate(config(name));
        const auto fine = simulate(config(name), 2 * base.cfg.options.substeps);
        double worst = 0.0;
        std::size_t unmatched = 0, compared = 0;
        for (std::size_t j = 0; j < base.out.endpoints.size(); ++j) {
            const auto& a = base.out.endpoints[j].report.minima;
            const auto& b = fine.out.endpoints[j].report.minima;
            for (const auto& m : a) {
                double best = 1e300, dy = 0.0, dz = 0.0;
                for (const auto& n : b) {
                    const double d = std::hypot(m.y - n.y, m.z - n.z);
                    if (d < best) best = d, dy = std::abs(m.y - n.y), dz = std::abs(m.z - n.z);
                }
                ++compared;
                if (best > 5e-6) {
                    ++unmatched;
                    continue;
                }
                worst = std::max({worst, dy, dz});
            }
            if (a.size() != b.size()) ++unmatched;
        }
        const bool this_ok = unmatched == 0 && worst < 0.5e-6;
        ok = ok && this_ok;
        detail += fmt::format("{}{}: {} -> {} substeps, {} minima, worst shift {:.4f} um, unmatched {}",
                              detail.empty() ? "" : " | ", name, base.cfg.options.substeps,
                              fine.cfg.options.substeps, compared, to_um(worst), unmatched);
    }
    return {ok, detail + " (limit 0.5 um)"};
}

// Informational: the MOT-phase U-wire current is a placeholder; report how much
// enabling it moves the trajectories.
Verdict mot_placeholder() {
    std::string detail;
    for (const auto& name : {"trajectory2_cool0G", "trajectory2_coolm3G"}) {
        const auto off = config(name);
        auto on = off;
        for (auto& st : on.protocol.stages)
            if (st.label == "mot" || st.label == "mot_off") st.enabled = true;
        const auto a = simulate(off);
        const auto b = simulate(on);
        const auto ta = track_initial_well(a);
        const auto tb = track_initial_well(b);
        double worst = 0.0;
        for (std::size_t i = 0; i < std::min(ta.rows.size(), tb.rows.size()); ++i)
            worst = std::max(worst, std::hypot(ta.rows[i]->y - tb.rows[i]->y, ta.rows[i]->z - tb.rows[i]->z));
        auto lost = [](const Track& t) { return t.lost_at ? fmt::format("{}", *t.lost_at) : std::string("never"); };
        detail += fmt::format("{}{}: tracked well moves up to {:.2f} um, lost at endpoint {} (off) vs {} (on)",
                              detail.empty() ? "" : " | ", name, worst, lost(ta), lost(tb));
    }
    return {true, detail};
}

const std::map<std::string, std::function<Verdict()>>& registry() {
    static const std::map<std::string, std::function<Verdict()>> r{
        {"1", criterion1}, {"2", criterion2}, {"3", criterion3}, {"4", criterion4}, {"5", criterion5},
        {"6", criterion6}, {"7", criterion7}, {"8", criterion8}, {"9", criterion9}, {"mot", mot_placeholder}};
    return r;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> wanted;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) wanted.emplace_back(argv[++i]);
        else {
            std::cerr << "usage: acceptance [--criterion 1..9|mot]...\n";
            return 2;
        }
    }
    if (wanted.empty())
        for (const auto* c : {"1", "2", "3", "4", "5", "6", "7", "8", "9", "mot"}) wanted.emplace_back(c);
    int failures = 0;
    for (const auto& c : wanted) {
        const auto it = registry().find(c);
        if (it == registry().end()) {
            std::cerr << "unknown criterion " << c << "\n";
            return 2;
        }
        Verdict v;
        try {
            v = it->second();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        const std::string label = c == "mot" ? "mot placeholder (info)" : "criterion " + c;
        std::cout << fmt::format("{}: {} | {}\n", label, v.pass ? "PASS" : "FAIL", v.detail) << std::flush;
        if (!v.pass) ++failures;
    }
    return failures ? 1 : 0;
}
