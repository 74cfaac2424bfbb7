#pragma once

#include "beantrap/geometry.hpp"

#include <Eigen/Dense>

#include <vector>

namespace beantrap {

/// Vector-potential operator of the discretized film.
///
/// potential()(i, j) is A_x at the centre of element i per unit sheet current
/// (A/m) flowing in element j, using the 2D kernel
///   (µ0/2π) ∫_j ln(L / |z_i − z'|) dz'
/// with L the gauge reference length. energy() is the symmetric matrix of the
/// magnetic energy per unit length, E = ½ kᵀ energy() k.
class InductanceOperator {
public:
    static InductanceOperator build(const ChipLayout& layout, double reference_length = 1.0);

    const Eigen::MatrixXd& potential() const { return potential_; }
    const Eigen::MatrixXd& energy() const { return energy_; }
    double reference_length() const { return reference_length_; }
    std::size_t size() const { return static_cast<std::size_t>(potential_.rows()); }

    // Nondimensional energy matrix used by the solver: lengths in µm,
    // sheet currents in units of the layout's largest K_C.
    const Eigen::MatrixXd& scaled_energy() const { return scaled_energy_; }

private:
    Eigen::MatrixXd potential_;
    Eigen::MatrixXd energy_;
    Eigen::MatrixXd scaled_energy_;
    double reference_length_ = 1.0;
};

/// ∫_{z_l}^{z_r} ln(L / |z − z'|) dz' in closed form (z may lie inside).
double log_kernel_integral(double z, double z_l, double z_r, double reference_length);

/// a_ext(z_i) = B_y · z_i, the gauge A_x = B_y z on the film plane.
Eigen::VectorXd external_potential(const ChipLayout& layout, double b_perp);

struct CriticalState {
    Eigen::VectorXd k;               // A/m per element
    Eigen::VectorXd a_ext_baseline;  // T·m, frozen at the last cool-down
    std::vector<double> i_wire;      // A per strip
    bool superconducting = false;

    static CriticalState normal(const ChipLayout& layout);
};

struct StepInput {
    Eigen::VectorXd delta_a_ext;     // T·m
    std::vector<double> i_target;    // A per strip
};

struct SolverOptions {
    int max_iterations = 0;          // 0 → automatic
    double kkt_tolerance = 1e-8;
    double inactive_eps = 1e-6;      // fraction of K_C treated as "on the bound"
};

struct StepDiagnostics {
    int iterations = 0;
    int saturated = 0;
    double kkt_residual = 0.0;
    double max_box_ratio = 0.0;      // max |k| / K_C
    double max_current_error = 0.0;  // A
    double objective = 0.0;          // J/m, relative to Δk = 0
};

struct StepOutcome {
    CriticalState state;
    StepDiagnostics diagnostics;
};

/// One implicit step of the critical-state evolution.
///
/// Minimizes the magnetic energy of the current change, ½ ΔkᵀWPΔk + ΔkᵀW Δa_ext,
/// over |k + Δk| <= K_C with the per-strip transport totals fixed to i_target.
/// Throws FeasibilityError naming the strip if a target exceeds its critical
/// current and SolverError if the QP does not converge or fails its KKT check.
StepOutcome step(const ChipLayout& layout, const CriticalState& state, const StepInput& input,
                 const InductanceOperator& op, const SolverOptions& options = {});

struct CoolOptions {
    bool allow_transport = false;
};

/// Normal → superconducting transition in perpendicular field b_perp.
/// With allow_transport the currents present at cooling are frozen in as a
/// uniform distribution per strip.
CriticalState field_cool(const ChipLayout& layout, const CriticalState& state, double b_perp,
                         const std::vector<double>& i_wire, const CoolOptions& options = {});

CriticalState transition_to_normal(const CriticalState& state);

struct KktReport {
    double residual = 0.0;       // normalized complementarity / stationarity residual
    double max_box_ratio = 0.0;
    double max_current_error = 0.0;
};

/// Checks optimality of `after` for the step from `before` driven by `input`,
/// independently of how the solver got there.
KktReport check_kkt(const ChipLayout& layout, const CriticalState& before,
                    const StepInput& input, const CriticalState& after,
                    const InductanceOperator& op, double inactive_eps = 1e-6);

/// Net current of each strip, Σ k_i w_i.
std::vector<double> strip_currents(const ChipLayout& layout, const Eigen::VectorXd& k);

/// Elements with |k| >= K_C (1 − eps).
std::vector<bool> saturated_mask(const ChipLayout& layout, const Eigen::VectorXd& k,
                                 double eps = 1e-6);

}  // namespace beantrap
