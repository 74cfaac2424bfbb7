#include "beantrap/error.hpp"
#include "beantrap/geometry.hpp"
#include "beantrap/units.hpp"

#include <doctest.h>

#include <cmath>

using namespace beantrap;

namespace {

LayoutDescription two_strips(double gap) {
    LayoutDescription d;
    d.strips.push_back({"A", 0.0, from_um(40), 45e3, true});
    d.strips.push_back({"B", from_um(20 + gap + 150), from_um(300), 45e3, true});
    return d;
}

}  // namespace

TEST_CASE("non-divisible widths are tiled by equal elements") {
    const auto layout = default_chip_layout();
    REQUIRE(layout.strips().size() == 2);
    const auto z = layout.elements_of(layout.strip_index("Z"));
    const auto u = layout.elements_of(layout.strip_index("U"));
    CHECK(z.size() == 14);
    CHECK(u.size() == 100);
    for (std::size_t i = u.begin; i < u.end; ++i)
        CHECK(layout.elements()[i].width == doctest::Approx(3e-6).epsilon(1e-12));
    for (std::size_t s = 0; s < 2; ++s) {
        const auto r = layout.elements_of(s);
        const auto& strip = layout.strips()[s];
        CHECK(layout.elements()[r.begin].left() == doctest::Approx(strip.left()).epsilon(1e-12));
        CHECK(layout.elements()[r.end - 1].right() == doctest::Approx(strip.right()).epsilon(1e-12));
        for (std::size_t i = r.begin + 1; i < r.end; ++i)
            CHECK(std::abs(layout.elements()[i].left() - layout.elements()[i - 1].right()) < 1e-15);
    }
}

TEST_CASE("default layout places the U wire on +z past the gap") {
    const auto layout = default_chip_layout();
    const auto& zs = layout.strips()[layout.strip_index("Z")];
    const auto& us = layout.strips()[layout.strip_index("U")];
    CHECK(zs.center_z == 0.0);
    CHECK(to_um(us.left() - zs.right()) == doctest::Approx(57.0));
    CHECK(zs.critical_current() == doctest::Approx(1.8));
    CHECK(us.critical_current() == doctest::Approx(13.5));
}

TEST_CASE("overlapping strips are rejected") {
    CHECK_THROWS_AS(ChipLayout::build(two_strips(-1.0)), GeometryError);
    CHECK_NOTHROW(ChipLayout::build(two_strips(0.0)));
    CHECK_NOTHROW(ChipLayout::build(two_strips(0.5)));
}

TEST_CASE("invalid strip parameters are rejected") {
    auto d = two_strips(50);
    d.strips[1].name = "A";
    CHECK_THROWS_AS(ChipLayout::build(d), ValidationError);
    d = two_strips(50);
    d.strips[0].k_c = 0.0;
    CHECK_THROWS_AS(ChipLayout::build(d), ValidationError);
    d = two_strips(50);
    d.strips[0].width = -1e-6;
    CHECK_THROWS_AS(ChipLayout::build(d), ValidationError);
    d = two_strips(50);
    d.element_width = 0.0;
    CHECK_THROWS_AS(ChipLayout::build(d), ValidationError);
    d = two_strips(50);
    d.strips.clear();
    CHECK_THROWS_AS(ChipLayout::build(d), ValidationError);
    CHECK_THROWS(default_chip_layout().strip_index("nope"));
}

TEST_CASE("layout hash identifies the discretization") {
    const auto a = default_chip_layout();
    const auto b = default_chip_layout();
    CHECK(a.hash() == b.hash());
    CHECK(a.hash().size() == 64);
    CHECK(default_chip_layout(58e-6).hash() != a.hash());
    CHECK(default_chip_layout(kDefaultUZGap, 2e-6).hash() != a.hash());
}

TEST_CASE("per-element critical densities follow their strip") {
    auto d = two_strips(50);
    d.strips[1].k_c = 20e3;
    const auto layout = ChipLayout::build(d);
    const auto kc = layout.critical_densities();
    const auto w = layout.widths();
    REQUIRE(kc.size() == layout.size());
    double total = 0;
    for (std::size_t i = 0; i < layout.size(); ++i) {
        CHECK(kc[i] == layout.strips()[layout.strip_of(i)].k_c);
        total += w[i];
    }
    CHECK(total == doctest::Approx(340e-6).epsilon(1e-12));
}
