#pragma once

#include "beantrap/bean.hpp"

#include <span>
#include <vector>

namespace beantrap {

/// Closed-form critical-state profiles of an isolated thin strip |z| <= a,
/// starting from the virgin (zero-field-cooled, currentless) state and ramped
/// monotonically to the drive value.
struct StripAnalyticCase {
    enum class Kind { field, transport };

    Kind kind = Kind::transport;
    double half_width = 0.0;  // m
    double k_c = 0.0;         // A/m
    double drive = 0.0;       // B_a (T) for field, I (A) for transport

    static StripAnalyticCase field(double half_width, double k_c, double b_applied);
    static StripAnalyticCase transport(double half_width, double k_c, double current);
};

class AnalyticProfile {
public:
    explicit AnalyticProfile(const StripAnalyticCase& c);

    /// Sheet current density K(z) in A/m; zero outside the strip.
    double operator()(double z) const;

    /// Flux-front (field) or saturation-front (transport) half-width b.
    double front() const { return front_; }
    const StripAnalyticCase& params() const { return case_; }

    /// Mean of K over [z_l, z_r] by tanh-sinh quadrature, split at ±b.
    double average(double z_l, double z_r) const;

    /// ∫ K dz over the whole strip.
    double integral() const;

private:
    StripAnalyticCase case_;
    double front_ = 0.0;
    double coefficient_ = 0.0;  // c for field, √(a²−b²) for transport
};

// Screening profile: K opposes the applied field, K(z) < 0 for z > 0 when B_a > 0
// (so that the induced B_y cancels B_a inside |z| < b).
// K = −sgn(B_a)(2K_c/π)·arctan(c z / √(b²−z²)),  c = √(a²−b²)/a,  b = a/cosh(B_a/B_char).
AnalyticProfile analytic_profile_field(const StripAnalyticCase& c);

// Transport profile: K = (2K_c/π)·arctan √((a²−b²)/(b²−z²)),  b = a√(1 − (I/I_c)²).
AnalyticProfile analytic_profile_transport(const StripAnalyticCase& c);

/// Element averages of the profile on the given cell edges (size n+1, relative
/// to the strip centre).
std::vector<double> element_averages(const AnalyticProfile& profile, std::span<const double> edges);

struct OracleComparison {
    std::vector<double> z;          // element centres (m)
    std::vector<double> numeric;    // solver K per element (A/m)
    std::vector<double> analytic;   // closed form at the element centres (A/m)
    std::vector<double> average;    // closed-form element averages (A/m)
    // Discrete relative L2 over the collocation points, ‖numeric − analytic‖ / ‖analytic‖
    // (or / K_C√n if the reference is 0); the same against the element averages.
    double l2_error = 0.0;
    double l2_error_average = 0.0;
    double linf_error = 0.0;        // max |numeric − analytic| / K_C
    double front_numeric = 0.0;     // m, innermost edge of the saturated region
    double front_analytic = 0.0;
    double current_numeric = 0.0;   // A
    double current_analytic = 0.0;
    StepDiagnostics worst;          // largest residuals seen over the ramp
};

/// Ramps a virgin single strip monotonically to the case drive in `substeps`
/// equal steps with the critical-state solver and compares with the closed form.
OracleComparison compare_with_solver(const StripAnalyticCase& c, double element_width = 3e-6, int substeps = 1,
                                     const SolverOptions& options = {});

/// Saturation front from a discretized profile: the smallest |inner edge| of
/// any element with |K| >= K_C(1 − eps); the half-width if none is saturated.
double saturated_front(const ChipLayout& layout, const Eigen::VectorXd& k, double eps = 1e-6);

}  // namespace beantrap
