#include "beantrap/error.hpp"
#include "beantrap/magnetics.hpp"
#include "beantrap/oracle.hpp"
#include "beantrap/units.hpp"

#include <doctest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <numbers>

using namespace beantrap;

namespace {

constexpr double kA = 20e-6;
constexpr double kKc = 45e3;

}  // namespace

TEST_CASE("transport front for the loading current") {
    const AnalyticProfile p(StripAnalyticCase::transport(kA, kKc, 1.34));
    CHECK(to_um(p.front()) == doctest::Approx(13.354).epsilon(1e-4));
    CHECK(p.front() == doctest::Approx(kA * std::sqrt(1.0 - std::pow(1.34 / 1.8, 2))));
}

TEST_CASE("field front at the characteristic field") {
    const double bc = characteristic_field(kKc);
    CHECK(to_gauss(bc) == doctest::Approx(180.0).epsilon(1e-3));
    const AnalyticProfile p(StripAnalyticCase::field(kA, kKc, bc));
    CHECK(p.front() / kA == doctest::Approx(1.0 / std::cosh(1.0)).epsilon(1e-12));
    CHECK(p.front() / kA == doctest::Approx(0.648).epsilon(1e-3));
}

TEST_CASE("profile integrals") {
    for (double i : {0.1, 0.9, 1.34, 1.79}) {
        const AnalyticProfile p(StripAnalyticCase::transport(kA, kKc, i));
        CHECK(std::abs(p.integral() - i) < 1e-10);
    }
    for (double r : {0.1, 0.5, 2.0}) {
        const AnalyticProfile p(StripAnalyticCase::field(kA, kKc, r * characteristic_field(kKc)));
        CHECK(std::abs(p.integral()) < 1e-10);
        CHECK(p(0.5 * kA) < 0.0);
        CHECK(p(-0.5 * kA) == doctest::Approx(-p(0.5 * kA)));
    }
}

TEST_CASE("profiles saturate outside the front and stay below K_C inside") {
    const AnalyticProfile t(StripAnalyticCase::transport(kA, kKc, 1.0));
    const AnalyticProfile f(StripAnalyticCase::field(kA, kKc, 0.5 * characteristic_field(kKc)));
    for (const auto* p : {&t, &f}) {
        const double b = p->front();
        CHECK(std::abs((*p)(0.5 * (b + kA))) == doctest::Approx(kKc).epsilon(1e-12));
        for (double z = -0.99 * b; z < b; z += 0.01 * b) CHECK(std::abs((*p)(z)) < kKc);
        CHECK((*p)(1.5 * kA) == 0.0);
    }
}

TEST_CASE("element averages match independent quadrature") {
    const AnalyticProfile p(StripAnalyticCase::transport(kA, kKc, 1.34));
    auto f = [&](double z) { return p(z); };
    const double b = p.front();
    const double cases[][2] = {{-kA, -b}, {-b, 0.3 * b}, {0.9 * b, 1.1 * b}, {1.1 * b, kA}};
    for (const auto& c : cases) {
        double ref = 0;
        // split at the front so the quadrature never straddles the kink
        double lo = c[0], hi = c[1];
        if (lo < b && hi > b) {
            ref = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, b, 15, 1e-14) +
                  boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, b, hi, 15, 1e-14);
        } else {
            ref = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, 15, 1e-14);
        }
        CHECK(p.average(lo, hi) == doctest::Approx(ref / (hi - lo)).epsilon(1e-9));
    }
}

TEST_CASE("field profile cancels the applied field inside the front") {
    // The induced perpendicular field of the screening sheet, evaluated just
    // above the film, must equal −B_a wherever |K| < K_C.
    const double ba = 0.5 * characteristic_field(kKc);
    const AnalyticProfile p(StripAnalyticCase::field(kA, kKc, ba));
    const int n = 4000;
    std::vector<double> edges(n + 1);
    for (int i = 0; i <= n; ++i) edges[i] = -kA + 2.0 * kA * i / n;
    const auto avg = element_averages(p, edges);
    for (double zf : {0.0, 0.3, 0.6}) {
        const double z = zf * p.front();
        double by = 0;
        for (int i = 0; i < n; ++i) by += sheet_field(avg[i], edges[i], edges[i + 1], 1e-10, z).y;
        CHECK(by == doctest::Approx(-ba).epsilon(0.01));
    }
}

TEST_CASE("transport limits") {
    CHECK(AnalyticProfile(StripAnalyticCase::transport(kA, kKc, 1.8)).front() == doctest::Approx(0.0));
    CHECK_THROWS_AS(AnalyticProfile(StripAnalyticCase::transport(kA, kKc, 1.81)), FeasibilityError);
    CHECK(AnalyticProfile(StripAnalyticCase::transport(kA, kKc, 0.0)).front() == doctest::Approx(kA));
    CHECK_THROWS_AS(AnalyticProfile(StripAnalyticCase::transport(0.0, kKc, 1.0)), ValidationError);
}

TEST_CASE("solver reproduces the closed forms") {
    const auto t = compare_with_solver(StripAnalyticCase::transport(kA, kKc, 1.34));
    CHECK(t.l2_error < 0.03);
    CHECK(std::abs(t.front_numeric - t.front_analytic) < 3e-6);
    CHECK(std::abs(t.current_numeric - 1.34) < 1e-9);
    const auto f = compare_with_solver(StripAnalyticCase::field(kA, kKc, 0.5 * characteristic_field(kKc)));
    CHECK(f.l2_error < 0.03);
    CHECK(f.l2_error_average > f.l2_error);  // the front-straddling element dominates the average metric
    CHECK(std::abs(f.front_numeric - f.front_analytic) < 3e-6);
    CHECK(std::abs(f.current_numeric) < 1e-9);
    const auto z = compare_with_solver(StripAnalyticCase::transport(kA, kKc, 0.0));
    CHECK(z.l2_error == 0.0);
    CHECK(z.linf_error == 0.0);
}

TEST_CASE("solver error shrinks with the element width") {
    const auto c = StripAnalyticCase::field(kA, kKc, 0.5 * characteristic_field(kKc));
    const auto coarse = compare_with_solver(c, 4e-6);
    const auto fine = compare_with_solver(c, 1e-6);
    CHECK(fine.l2_error < coarse.l2_error);
    CHECK(compare_with_solver(c, 0.25e-6).l2_error_average < 0.01);
}
