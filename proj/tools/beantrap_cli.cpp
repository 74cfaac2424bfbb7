#include "beantrap/config.hpp"
#include "beantrap/error.hpp"
#include "beantrap/oracle.hpp"
#include "beantrap/outputs.hpp"
#include "beantrap/units.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>

using namespace beantrap;

namespace {

enum Exit { kOk = 0, kEndpointFailed = 1, kInvalid = 2, kInternal = 3 };

struct Common {
    std::string config;
    std::string out = "out";
    std::optional<unsigned> workers;
    std::optional<int> substeps;
};

struct OracleArgs {
    std::string kind = "transport";
    double ratio = 0.9;
    double half_width_um = 20.0;
    double k_c = 45.0;
    double element_width_um = 3.0;
};

int cmd_validate(const Common& c) {
    const RunConfig cfg = load_config(c.config);
    const ChipLayout layout = validate_config(cfg);
    std::cout << fmt::format("ok: {} ({} strips, {} elements, {} endpoints, config sha256 {})\n", cfg.name,
                             layout.strips().size(), layout.size(), cfg.protocol.endpoint_count(),
                             cfg.hash.substr(0, 12));
    return kOk;
}

int cmd_execute(const Common& c, ExecuteMode mode) {
    const RunConfig cfg = load_config(c.config);
    ExecuteOptions eo;
    eo.mode = mode;
    eo.workers = c.workers;
    eo.substeps = c.substeps;
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = execute(cfg, c.out, eo);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::size_t failed = 0;
    for (const auto& ep : res.output.endpoints)
        if (!ep.ok) {
            ++failed;
            std::cerr << fmt::format("endpoint {} aborted: {}\n", ep.index, ep.error);
        }
    std::cout << fmt::format("{}: {} endpoints ({} failed) in {:.2f} s; {} files + manifest.json in {}\n", cfg.name,
                             res.output.endpoints.size(), failed, secs, res.artifacts.size(), c.out);
    return failed ? kEndpointFailed : kOk;
}

int cmd_oracle(const Common& c, const OracleArgs& a, bool write_csv) {
    const double hw = from_um(a.half_width_um);
    const double kc = a.k_c * kMilliAmpPerMicron;
    StripAnalyticCase oc;
    if (a.kind == "field")
        oc = StripAnalyticCase::field(hw, kc, a.ratio * characteristic_field(kc));
    else
        oc = StripAnalyticCase::transport(hw, kc, a.ratio * 2.0 * hw * kc);
    const auto t0 = std::chrono::steady_clock::now();
    const auto cmp = compare_with_solver(oc, from_um(a.element_width_um), c.substeps.value_or(1));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::cout << fmt::format("case {}  ratio {}  half-width {} um  K_C {} mA/um  elements {}\n", a.kind, a.ratio,
                             a.half_width_um, a.k_c, cmp.z.size());
    std::cout << fmt::format("L2 error    {:.4e} (element centres)  {:.4e} (element averages)\n", cmp.l2_error,
                             cmp.l2_error_average);
    std::cout << fmt::format("Linf error  {:.4e} (fraction of K_C)\n", cmp.linf_error);
    std::cout << fmt::format("front       numeric {:.3f} um  closed form {:.3f} um\n", to_um(cmp.front_numeric),
                             to_um(cmp.front_analytic));
    std::cout << fmt::format("current     numeric {:.12f} A  target {:.12f} A\n", cmp.current_numeric,
                             cmp.current_analytic);
    std::cout << fmt::format("kkt         {:.3e}  time {:.3f} s\n", cmp.worst.kkt_residual, secs);
    if (!c.config.empty())
        std::cerr << "note: --config is ignored by the oracle subcommand\n";
    if (write_csv) {
        std::filesystem::create_directories(c.out);
        std::ofstream f(std::filesystem::path(c.out) / "oracle.csv");
        f << "z_um,K_numeric_A_per_m,K_analytic_A_per_m,K_analytic_average_A_per_m\n";
        for (std::size_t i = 0; i < cmp.z.size(); ++i)
            f << fmt::format("{:.4f},{:.9e},{:.9e},{:.9e}\n", to_um(cmp.z[i]), cmp.numeric[i], cmp.analytic[i],
                             cmp.average[i]);
    }
    return kOk;
}

void add_common(CLI::App* sub, Common& c, bool needs_config, bool needs_out) {
    auto* opt = sub->add_option("--config", c.config, "run-configuration JSON file");
    if (needs_config) opt->required()->check(CLI::ExistingFile);
    if (needs_out) sub->add_option("--out", c.out, "output directory")->capture_default_str();
    sub->add_option("--workers", c.workers, "worker threads for sweep endpoints")->check(CLI::Range(1u, 1024u));
    sub->add_option("--substeps", c.substeps, "override ramp substeps")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bean critical-state simulation of superconducting atom-chip traps"};
    app.require_subcommand(1);
    Common common;
    OracleArgs oracle;

    auto* validate = app.add_subcommand("validate", "check a config without running it");
    add_common(validate, common, true, false);
    auto* run = app.add_subcommand("run", "replay the protocol and write trajectory artifacts");
    add_common(run, common, true, true);
    auto* map = app.add_subcommand("map", "write field maps and contours for the configured endpoints");
    add_common(map, common, true, true);
    auto* orc = app.add_subcommand("oracle", "compare the solver with the closed-form single-strip profile");
    add_common(orc, common, false, true);
    orc->add_option("--case", oracle.kind, "field or transport")
        ->check(CLI::IsMember({"field", "transport"}))
        ->capture_default_str();
    orc->add_option("--ratio", oracle.ratio, "B_a/B_char (field) or I/I_c (transport)")->capture_default_str();
    orc->add_option("--half-width-um", oracle.half_width_um)->capture_default_str()->check(CLI::PositiveNumber);
    orc->add_option("--kc-mA-per-um", oracle.k_c)->capture_default_str()->check(CLI::PositiveNumber);
    orc->add_option("--element-width-um", oracle.element_width_um)->capture_default_str()->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*validate) return cmd_validate(common);
        if (*run) return cmd_execute(common, ExecuteMode::run);
        if (*map) return cmd_execute(common, ExecuteMode::map);
        if (*orc) return cmd_oracle(common, oracle, orc->get_option("--out")->count() > 0);
    } catch (const ConfigError& e) {
        std::cerr << "invalid config: " << e.what() << "\n";
        return kInvalid;
    } catch (const GeometryError& e) {
        std::cerr << "geometry: " << e.what() << "\n";
        return kInvalid;
    } catch (const FeasibilityError& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return kInvalid;
    } catch (const ValidationError& e) {
        std::cerr << "invalid: " << e.what() << "\n";
        return kInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInternal;
    }
    return kInternal;
}
