#include "beantrap/config.hpp"
#include "beantrap/error.hpp"
#include "beantrap/magnetics.hpp"
#include "beantrap/oracle.hpp"
#include "beantrap/outputs.hpp"
#include "beantrap/units.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>

namespace py = pybind11;
using namespace beantrap;

namespace {

struct RunHandle {
    RunConfig config;
    ChipLayout layout;
    RunOutput output;

    const EndpointResult& endpoint(std::size_t index) const {
        for (const auto& ep : output.endpoints)
            if (ep.index == index) return ep;
        throw py::index_error("endpoint " + std::to_string(index) + " was not run");
    }
};

py::array_t<double> to_array(const std::vector<double>& v) { return py::array_t<double>(v.size(), v.data()); }

py::dict minimum_dict(const TrapMinimum& m) {
    py::dict d;
    d["y_um"] = to_um(m.y);
    d["z_um"] = to_um(m.z);
    d["U_uK"] = m.u;
    d["boundary"] = m.boundary;
    return d;
}

ExecuteMode parse_mode(const std::string& mode) {
    if (mode == "run") return ExecuteMode::run;
    if (mode == "map") return ExecuteMode::map;
    throw py::value_error("mode must be 'run' or 'map'");
}

}  // namespace

PYBIND11_MODULE(_beantrap, m) {
    m.doc() = "Bean critical-state simulation of superconducting atom-chip traps";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<GeometryError>(m, "GeometryError", base.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<FeasibilityError>(m, "FeasibilityError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

    py::class_<RunConfig>(m, "Config")
        .def_readonly("name", &RunConfig::name)
        .def_readonly("sha256", &RunConfig::hash)
        .def_property_readonly("endpoint_count", [](const RunConfig& c) { return c.protocol.endpoint_count(); })
        .def_property_readonly("strips", [](const RunConfig& c) {
            py::list out;
            for (const auto& s : c.layout.strips) {
                py::dict d;
                d["name"] = s.name;
                d["center_z_um"] = to_um(s.center_z);
                d["width_um"] = to_um(s.width);
                d["critical_current_A"] = s.critical_current();
                out.append(d);
            }
            return out;
        })
        .def("__repr__", [](const RunConfig& c) { return "<beantrap.Config '" + c.name + "'>"; });

    m.def("load_config", &load_config, py::arg("path"), "Reads and parses a JSON run configuration.");
    m.def("parse_config", &parse_config, py::arg("text"), "Parses a JSON run configuration from a string.");
    m.def(
        "validate",
        [](const RunConfig& c) {
            const auto layout = validate_config(c);
            py::dict d;
            d["strips"] = layout.strips().size();
            d["elements"] = layout.size();
            d["endpoints"] = c.protocol.endpoint_count();
            d["layout_sha256"] = layout.hash();
            return d;
        },
        py::arg("config"), "Checks a configuration without running it; raises ConfigError on problems.");

    m.def(
        "execute",
        [](const RunConfig& c, const std::filesystem::path& out, const std::string& mode,
           std::optional<unsigned> workers, std::optional<int> substeps) {
            ExecuteOptions eo;
            eo.mode = parse_mode(mode);
            eo.workers = workers;
            eo.substeps = substeps;
            ExecuteResult res;
            {
                py::gil_scoped_release release;
                res = execute(c, out, eo);
            }
            py::dict d;
            d["ok"] = res.ok;
            d["endpoints"] = res.output.endpoints.size();
            py::list files;
            for (const auto& a : res.artifacts) files.append(py::make_tuple(a.file, a.kind, a.sha256));
            d["artifacts"] = files;
            return d;
        },
        py::arg("config"), py::arg("out_dir"), py::arg("mode") = "run", py::arg("workers") = py::none(),
        py::arg("substeps") = py::none(), "Runs a configuration and writes its artifacts and manifest.json.");

    py::class_<RunHandle, std::shared_ptr<RunHandle>>(m, "RunResult")
        .def_property_readonly("all_ok", [](const RunHandle& r) { return r.output.all_ok(); })
        .def_property_readonly("endpoints",
                               [](const RunHandle& r) {
                                   std::vector<std::size_t> v;
                                   for (const auto& ep : r.output.endpoints) v.push_back(ep.index);
                                   return v;
                               })
        .def(
            "trajectory",
            [](const RunHandle& r) {
                py::list out;
                for (const auto& row : trajectory_table(r.output, r.config.track_jump)) {
                    py::dict d;
                    d["endpoint"] = row.endpoint;
                    d["By_G"] = row.b_y_f;
                    d["Bz_G"] = row.b_z_f;
                    d["well"] = row.well;
                    d["y_um"] = row.y;
                    d["z_um"] = row.z;
                    d["U_uK"] = row.u;
                    d["merged"] = row.merged;
                    d["leaking"] = row.leaking;
                    d["boundary"] = row.boundary;
                    out.append(d);
                }
                return out;
            },
            "One dict per located minimum with well ids tracked across endpoints.")
        .def(
            "minima",
            [](const RunHandle& r, std::size_t index) {
                py::list out;
                for (const auto& mm : r.endpoint(index).report.minima) out.append(minimum_dict(mm));
                return out;
            },
            py::arg("endpoint"))
        .def(
            "sheet_current",
            [](const RunHandle& r, std::size_t index) {
                const auto& k = r.endpoint(index).state.k;
                std::vector<double> z, kv(k.data(), k.data() + k.size());
                for (const auto& e : r.layout.elements()) z.push_back(to_um(e.center_z));
                return py::make_tuple(to_array(z), to_array(kv));
            },
            py::arg("endpoint"), "Element centres (µm) and sheet current density (A/m) at an endpoint.")
        .def(
            "field",
            [](const RunHandle& r, std::size_t index, double y_um, double z_um) {
                const auto& ep = r.endpoint(index);
                const auto b = field_at(r.layout, ep.state, ep.controls.bias, from_um(y_um), from_um(z_um));
                return py::make_tuple(to_gauss(b.x), to_gauss(b.y), to_gauss(b.z));
            },
            py::arg("endpoint"), py::arg("y_um"), py::arg("z_um"), "Total field (Bx, By, Bz) in gauss.");

    m.def(
        "run",
        [](const RunConfig& c, std::optional<std::vector<std::size_t>> endpoints, std::optional<unsigned> workers,
           std::optional<int> substeps) {
            auto h = std::make_shared<RunHandle>(RunHandle{c, validate_config(c), {}});
            RunOptions opts = c.options;
            ControlProtocol protocol = c.protocol;
            if (endpoints) opts.endpoints = *endpoints;
            if (workers) opts.workers = *workers;
            if (substeps) override_substeps(protocol, opts, *substeps);
            py::gil_scoped_release release;
            h->output = beantrap::run(protocol, h->layout, opts);
            return h;
        },
        py::arg("config"), py::arg("endpoints") = py::none(), py::arg("workers") = py::none(),
        py::arg("substeps") = py::none(), "Simulates a configuration in memory.");

    m.def(
        "compare_oracle",
        [](const std::string& kind, double ratio, double half_width_um, double kc_mA_per_um, double element_width_um,
           int substeps) {
            const double a = from_um(half_width_um);
            const double kc = kc_mA_per_um * kMilliAmpPerMicron;
            StripAnalyticCase c;
            if (kind == "field") c = StripAnalyticCase::field(a, kc, ratio * characteristic_field(kc));
            else if (kind == "transport") c = StripAnalyticCase::transport(a, kc, ratio * 2.0 * a * kc);
            else throw py::value_error("kind must be 'field' or 'transport'");
            const auto r = compare_with_solver(c, from_um(element_width_um), substeps);
            std::vector<double> z;
            for (double v : r.z) z.push_back(to_um(v));
            py::dict d;
            d["z_um"] = to_array(z);
            d["numeric"] = to_array(r.numeric);
            d["analytic"] = to_array(r.analytic);
            d["analytic_average"] = to_array(r.average);
            d["l2_error"] = r.l2_error;
            d["l2_error_average"] = r.l2_error_average;
            d["linf_error"] = r.linf_error;
            d["front_numeric_um"] = to_um(r.front_numeric);
            d["front_analytic_um"] = to_um(r.front_analytic);
            d["current_numeric_A"] = r.current_numeric;
            d["current_analytic_A"] = r.current_analytic;
            d["kkt_residual"] = r.worst.kkt_residual;
            return d;
        },
        py::arg("kind") = "transport", py::arg("ratio") = 0.9, py::arg("half_width_um") = 20.0,
        py::arg("kc_mA_per_um") = 45.0, py::arg("element_width_um") = 3.0, py::arg("substeps") = 1,
        "Solver profile of a virgin strip against the closed form. ratio is B_a/B_char or I/I_c.");

    m.def(
        "characteristic_field_gauss", [](double kc_mA_per_um) {
            return to_gauss(characteristic_field(kc_mA_per_um * kMilliAmpPerMicron));
        },
        py::arg("kc_mA_per_um") = 45.0);
}
