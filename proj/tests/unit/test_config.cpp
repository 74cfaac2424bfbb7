#include "beantrap/config.hpp"
#include "beantrap/error.hpp"
#include "beantrap/hash.hpp"
#include "beantrap/outputs.hpp"
#include "beantrap/units.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace beantrap;
using nlohmann::json;

namespace {

const std::filesystem::path kConfigs = std::filesystem::path(BEANTRAP_SOURCE_DIR) / "configs";

json shipped(const std::string& name) {
    std::ifstream f(kConfigs / (name + ".json"));
    return json::parse(f);
}

std::string error_path(const json& j) {
    try {
        validate_config(parse_config(j.dump()));
    } catch (const ConfigError& e) {
        return e.path();
    }
    return "";
}

json small_run() {
    json j = shipped("trajectory1");
    j["name"] = "small";
    j["protocol"]["sweep"]["count"] = 3;
    j["outputs"] = {{"trajectory", true}, {"minima", true}, {"profile_endpoints", {2}}};
    return j;
}

}  // namespace

TEST_CASE("shipped configs load and validate") {
    for (const auto* name : {"trajectory1", "trajectory2_cool0G", "trajectory2_coolm3G", "surface-maps"}) {
        CAPTURE(name);
        const auto cfg = load_config(kConfigs / (std::string(name) + ".json"));
        const auto layout = validate_config(cfg);
        CHECK(layout.size() == 114);
        CHECK(cfg.hash.size() == 64);
        CHECK(cfg.options.solver.kkt_tolerance == doctest::Approx(1e-8));
    }
    const auto t1 = load_config(kConfigs / "trajectory1.json");
    CHECK(t1.protocol.endpoint_count() == 61);
    CHECK(to_gauss(*t1.protocol.sweep->end.b_y) == doctest::Approx(14.1));
    const auto& strips = t1.layout.strips;
    CHECK(to_um(strips[1].center_z - 0.5 * strips[1].width) - to_um(strips[0].center_z + 0.5 * strips[0].width) ==
          doctest::Approx(57.0));
}

TEST_CASE("hash is insensitive to formatting but not to content") {
    const json j = shipped("trajectory1");
    CHECK(parse_config(j.dump()).hash == parse_config(j.dump(4)).hash);
    json k = j;
    k["protocol"]["sweep"]["count"] = 60;
    CHECK(parse_config(k.dump()).hash != parse_config(j.dump()).hash);
}

TEST_CASE("unknown keys are reported with their full path") {
    json j = shipped("trajectory1");
    j["protocol"]["stages"][1]["b_y_t_Gx"] = 1.0;
    CHECK(error_path(j) == "protocol.stages[1].b_y_t_Gx");
    j = shipped("trajectory1");
    j["solver"]["substep"] = 3;
    CHECK(error_path(j) == "solver.substep");
    j = shipped("trajectory1");
    j["layout"]["strips"][0].erase("width_um");
    CHECK(error_path(j) == "layout.strips[0].width_um");
    j = shipped("trajectory1");
    j["protocol"]["stages"][0]["kind"] = "anneal";
    CHECK(error_path(j) == "protocol.stages[0].kind");
    j = shipped("trajectory1");
    j["trap"]["window_um"]["y_min"] = 0.0;
    CHECK(error_path(j).rfind("trap.window_um", 0) == 0);
    CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
}

TEST_CASE("over-critical transport names the critical current") {
    json j = shipped("trajectory1");
    for (auto& st : j["protocol"]["stages"])
        if (st["kind"] == "ramp" && st.contains("currents_A") && st["currents_A"].contains("Z"))
            st["currents_A"]["Z"] = 2.0;
    try {
        validate_config(parse_config(j.dump()));
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.path() == "protocol");
        CHECK(std::string(e.what()).find("1.8 A") != std::string::npos);
    }
}

TEST_CASE("overlapping strips give a geometry diagnostic") {
    json j = shipped("trajectory1");
    j["layout"]["strips"][1]["center_z_um"] = 100.0;
    try {
        validate_config(parse_config(j.dump()));
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.path() == "layout.strips");
        CHECK(std::string(e.what()).find("overlap") != std::string::npos);
    }
}

TEST_CASE("execute writes artifacts listed in the manifest") {
    const auto dir = std::filesystem::temp_directory_path() / "beantrap_test_execute";
    std::filesystem::remove_all(dir);
    const auto cfg = parse_config(small_run().dump());
    const auto res = execute(cfg, dir);
    REQUIRE(res.ok);
    std::ifstream mf(dir / "manifest.json");
    const json m = json::parse(mf);
    CHECK(m["config"]["sha256"] == cfg.hash);
    CHECK(m["endpoints"]["failed"] == 0);
    CHECK(m["residuals"]["max_kkt"].get<double>() <= 1e-8);
    std::set<std::string> files;
    for (const auto& o : m["outputs"]) {
        files.insert(o["file"]);
        CHECK(sha256_file(dir / o["file"].get<std::string>()) == o["sha256"]);
    }
    CHECK(files == std::set<std::string>{"trajectory.csv", "saddles.csv", "profiles_ep002.csv"});
    std::ifstream tf(dir / "trajectory.csv");
    std::string header;
    std::getline(tf, header);
    CHECK(header == "endpoint,abs_By_G,By_G,Bz_G,well,y_um,z_um,U_uK,merged,leaking,boundary");

    // a second run of the same config reproduces every byte
    const auto dir2 = dir.string() + "_again";
    std::filesystem::remove_all(dir2);
    execute(cfg, dir2);
    for (const auto& f : files) CHECK(sha256_file(dir / f) == sha256_file(std::filesystem::path(dir2) / f));
}

TEST_CASE("map mode needs a map section and runs only its endpoints") {
    const auto dir = std::filesystem::temp_directory_path() / "beantrap_test_map";
    std::filesystem::remove_all(dir);
    ExecuteOptions eo;
    eo.mode = ExecuteMode::map;
    CHECK_THROWS_AS(execute(parse_config(small_run().dump()), dir, eo), ConfigError);
    json j = small_run();
    j["outputs"]["maps"] = {{"endpoints", {1}},
                            {"grid_um", {{"y_min", 150}, {"y_max", 350}, {"z_min", -100}, {"z_max", 100}, {"spacing", 4}}}};
    const auto res = execute(parse_config(j.dump()), dir, eo);
    REQUIRE(res.output.endpoints.size() == 1);
    CHECK(res.output.endpoints[0].index == 1);
    CHECK(std::filesystem::exists(dir / "map_ep001.csv"));
    CHECK(std::filesystem::exists(dir / "contours_ep001.csv"));
    CHECK_FALSE(std::filesystem::exists(dir / "trajectory.csv"));
}

TEST_CASE("substep override reaches every ramp") {
    auto cfg = load_config(kConfigs / "trajectory1.json");
    override_substeps(cfg.protocol, cfg.options, 80);
    CHECK(cfg.options.substeps == 80);
    for (const auto& st : cfg.protocol.stages)
        if (st.kind == Stage::Kind::ramp) CHECK(st.substeps == 80);
    CHECK(cfg.protocol.sweep->substeps == 80);
    CHECK_THROWS_AS(override_substeps(cfg.protocol, cfg.options, 0), ValidationError);
}
