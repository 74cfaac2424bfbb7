#include "beantrap/oracle.hpp"

#include "beantrap/error.hpp"
#include "beantrap/units.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace beantrap {

namespace {

// Pieces end on the front, where K has a square-root kink; tanh-sinh keeps
// full accuracy there without deep adaptive bisection.
template <class F>
double integrate(const F& f, double lo, double hi) {
    if (hi <= lo) return 0.0;
    thread_local boost::math::quadrature::tanh_sinh<double> rule;
    return rule.integrate(f, lo, hi, 1e-13);
}

}  // namespace

StripAnalyticCase StripAnalyticCase::field(double half_width, double k_c, double b_applied) {
    return {Kind::field, half_width, k_c, b_applied};
}

StripAnalyticCase StripAnalyticCase::transport(double half_width, double k_c, double current) {
    return {Kind::transport, half_width, k_c, current};
}

AnalyticProfile::AnalyticProfile(const StripAnalyticCase& c) : case_(c) {
    if (!(c.half_width > 0.0) || !(c.k_c > 0.0))
        throw ValidationError("analytic case needs positive half-width and K_C");
    const double a = c.half_width;
    if (c.kind == StripAnalyticCase::Kind::field) {
        if (!(c.drive >= 0.0)) throw ValidationError("field case requires B_a >= 0");
        const double x = c.drive / characteristic_field(c.k_c);
        front_ = (x > 700.0) ? 0.0 : a / std::cosh(x);
        coefficient_ = std::tanh(x);  // √(a²−b²)/a
    } else {
        const double ic = 2.0 * a * c.k_c;
        if (std::abs(c.drive) > ic * (1.0 + 1e-12))
            throw FeasibilityError("strip", "transport current exceeds the critical current 2·a·K_C");
        const double r = std::min(1.0, std::abs(c.drive) / ic);
        front_ = a * std::sqrt(std::max(0.0, 1.0 - r * r));
        coefficient_ = std::sqrt(std::max(0.0, a * a - front_ * front_));
    }
}

double AnalyticProfile::operator()(double z) const {
    const double a = case_.half_width;
    const double b = front_;
    const double az = std::abs(z);
    if (az > a) return 0.0;
    const double kc = case_.k_c;
    constexpr double two_over_pi = 2.0 / std::numbers::pi;
    if (case_.kind == StripAnalyticCase::Kind::field) {
        if (case_.drive == 0.0) return 0.0;
        const double mag = (az >= b) ? kc
                                     : two_over_pi * kc * std::atan(coefficient_ * az / std::sqrt(b * b - z * z));
        return z > 0 ? -mag : (z < 0 ? mag : 0.0);
    }
    if (case_.drive == 0.0) return 0.0;
    const double sign = case_.drive > 0 ? 1.0 : -1.0;
    if (az >= b) return sign * kc;
    return sign * two_over_pi * kc * std::atan(coefficient_ / std::sqrt(b * b - z * z));
}

double AnalyticProfile::average(double z_l, double z_r) const {
    if (!(z_r > z_l)) throw ValidationError("average over an empty interval");
    const auto f = [this](double z) { return (*this)(z); };
    const double a = case_.half_width;
    const double b = front_;
    // Integrate piecewise so the quadrature never straddles a kink.
    std::vector<double> cuts{z_l, z_r};
    for (double c : {-a, -b, 0.0, b, a})
        if (c > z_l && c < z_r) cuts.push_back(c);
    std::sort(cuts.begin(), cuts.end());
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) sum += integrate(f, cuts[i], cuts[i + 1]);
    return sum / (z_r - z_l);
}

double AnalyticProfile::integral() const {
    const double a = case_.half_width;
    return average(-a, a) * 2.0 * a;
}

AnalyticProfile analytic_profile_field(const StripAnalyticCase& c) {
    if (c.kind != StripAnalyticCase::Kind::field) throw ValidationError("not a field case");
    return AnalyticProfile(c);
}

AnalyticProfile analytic_profile_transport(const StripAnalyticCase& c) {
    if (c.kind != StripAnalyticCase::Kind::transport) throw ValidationError("not a transport case");
    return AnalyticProfile(c);
}

std::vector<double> element_averages(const AnalyticProfile& profile, std::span<const double> edges) {
    std::vector<double> out;
    if (edges.size() < 2) return out;
    out.reserve(edges.size() - 1);
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) out.push_back(profile.average(edges[i], edges[i + 1]));
    return out;
}

}  // namespace beantrap
