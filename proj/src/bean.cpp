#include "beantrap/bean.hpp"

#include "beantrap/box_qp.hpp"
#include "beantrap/error.hpp"
#include "beantrap/units.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace beantrap {

namespace {

constexpr double kLengthUnit = kMicron;

double x_log_abs(double x) { return x == 0.0 ? 0.0 : x * std::log(std::abs(x)); }

double max_critical_density(const ChipLayout& layout) {
    double m = 0.0;
    for (const auto& s : layout.strips()) m = std::max(m, s.k_c);
    return m;
}

// A_x scale used to nondimensionalize potentials: (µ0/2π)·1 µm·K_ref.
double potential_scale(const ChipLayout& layout) {
    return kMu0Over2Pi * kLengthUnit * max_critical_density(layout);
}

void check_targets(const ChipLayout& layout, const std::vector<double>& i_target) {
    const auto strips = layout.strips();
    if (i_target.size() != strips.size())
        throw ValidationError(fmt::format("expected {} transport targets, got {}", strips.size(),
                                          i_target.size()));
    for (std::size_t s = 0; s < strips.size(); ++s) {
        const double i = i_target[s];
        if (!std::isfinite(i))
            throw ValidationError(fmt::format("strip '{}': transport target is not finite", strips[s].name));
        if (!strips[s].carries_transport && i != 0.0)
            throw ValidationError(fmt::format("strip '{}' carries no transport current", strips[s].name));
        const double ic = strips[s].critical_current();
        if (std::abs(i) > ic * (1.0 + 1e-12))
            throw FeasibilityError(strips[s].name,
                                   fmt::format("strip '{}': transport current {:.6g} A would exceed "
                                               "critical current {:.6g} A",
                                               strips[s].name, i, ic));
    }
}

}  // namespace

double log_kernel_integral(double z, double z_l, double z_r, double reference_length) {
    const double w = z_r - z_l;
    const double a = z - z_l;
    const double b = z - z_r;
    // ∫ ln|z − z'| dz' over [z_l, z_r] = a ln|a| − b ln|b| − w
    return w * std::log(reference_length) - (x_log_abs(a) - x_log_abs(b) - w);
}

InductanceOperator InductanceOperator::build(const ChipLayout& layout, double reference_length) {
    if (!(reference_length > 0.0)) throw ValidationError("reference length must be positive");
    const auto elems = layout.elements();
    const auto n = static_cast<Eigen::Index>(elems.size());
    for (std::size_t i = 1; i < elems.size(); ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (elems[i].center_z == elems[j].center_z)
                throw GeometryError(fmt::format("elements {} and {} share a centre", j, i));

    InductanceOperator op;
    op.reference_length_ = reference_length;
    op.potential_.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto& ej = elems[static_cast<std::size_t>(j)];
            op.potential_(i, j) =
                kMu0Over2Pi * log_kernel_integral(elems[static_cast<std::size_t>(i)].center_z,
                                                  ej.left(), ej.right(), reference_length);
        }
    // Collocation makes w_i P_ij and w_j P_ji differ only between elements of
    // different width; the energy form uses their mean.
    op.energy_.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double wi = elems[static_cast<std::size_t>(i)].width;
            const double wj = elems[static_cast<std::size_t>(j)].width;
            const double e = 0.5 * (wi * op.potential_(i, j) + wj * op.potential_(j, i));
            op.energy_(i, j) = e;
            op.energy_(j, i) = e;
        }
    op.scaled_energy_ = op.energy_ / (kMu0Over2Pi * kLengthUnit * kLengthUnit);
    return op;
}

Eigen::VectorXd external_potential(const ChipLayout& layout, double b_perp) {
    const auto elems = layout.elements();
    Eigen::VectorXd a(static_cast<Eigen::Index>(elems.size()));
    for (std::size_t i = 0; i < elems.size(); ++i)
        a(static_cast<Eigen::Index>(i)) = b_perp * elems[i].center_z;
    return a;
}

CriticalState CriticalState::normal(const ChipLayout& layout) {
    CriticalState s;
    s.k = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.size()));
    s.a_ext_baseline = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.size()));
    s.i_wire.assign(layout.strips().size(), 0.0);
    s.superconducting = false;
    return s;
}

std::vector<double> strip_currents(const ChipLayout& layout, const Eigen::VectorXd& k) {
    std::vector<double> out(layout.strips().size(), 0.0);
    const auto elems = layout.elements();
    for (std::size_t i = 0; i < elems.size(); ++i)
        out[elems[i].strip] += k(static_cast<Eigen::Index>(i)) * elems[i].width;
    return out;
}

std::vector<bool> saturated_mask(const ChipLayout& layout, const Eigen::VectorXd& k, double eps) {
    const auto kc = layout.critical_densities();
    std::vector<bool> out(kc.size());
    for (std::size_t i = 0; i < kc.size(); ++i)
        out[i] = std::abs(k(static_cast<Eigen::Index>(i))) >= kc[i] * (1.0 - eps);
    return out;
}

StepOutcome step(const ChipLayout& layout, const CriticalState& state, const StepInput& input,
                 const InductanceOperator& op, const SolverOptions& options) {
    if (!state.superconducting) throw ValidationError("step requires a superconducting state");
    const auto n = static_cast<Eigen::Index>(layout.size());
    if (input.delta_a_ext.size() != n || state.k.size() != n || op.potential().rows() != n)
        throw ValidationError("step: vector sizes do not match the layout");
    check_targets(layout, input.i_target);

    const double k_ref = max_critical_density(layout);
    const double a_scale = potential_scale(layout);
    const auto elems = layout.elements();
    const auto kc = layout.critical_densities();
    const auto current_now = strip_currents(layout, state.k);

    BoxQP qp;
    qp.hessian = op.scaled_energy();
    qp.linear.resize(n);
    qp.lower.resize(n);
    qp.upper.resize(n);
    qp.weight.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& e = elems[static_cast<std::size_t>(i)];
        const double w = e.width / kLengthUnit;
        const double k0 = state.k(i) / k_ref;
        const double bound = kc[static_cast<std::size_t>(i)] / k_ref;
        qp.weight(i) = w;
        qp.linear(i) = w * input.delta_a_ext(i) / a_scale;
        qp.lower(i) = std::min(-bound - k0, 0.0);
        qp.upper(i) = std::max(bound - k0, 0.0);
    }
    for (std::size_t s = 0; s < layout.strips().size(); ++s) {
        const auto r = layout.elements_of(s);
        qp.groups.push_back(EqualityGroup{
            r.begin, r.end, (input.i_target[s] - current_now[s]) / (k_ref * kLengthUnit)});
    }

    BoxQPOptions qp_opts;
    qp_opts.max_iterations = options.max_iterations;
    BoxQPResult res;
    try {
        res = solve_box_qp(qp, Eigen::VectorXd::Zero(n), qp_opts);
    } catch (const FeasibilityError& e) {
        const auto g = static_cast<std::size_t>(std::stoul(e.strip()));
        const auto& strip = layout.strips()[g];
        throw FeasibilityError(strip.name,
                               fmt::format("strip '{}': transport current {:.6g} A would exceed "
                                           "critical current {:.6g} A",
                                           strip.name, input.i_target[g], strip.critical_current()));
    }

    StepOutcome out;
    out.state = state;
    out.state.i_wire = input.i_target;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        if (res.active[idx] == BoundState::upper) out.state.k(i) = kc[idx];
        else if (res.active[idx] == BoundState::lower) out.state.k(i) = -kc[idx];
        else out.state.k(i) = std::clamp(state.k(i) + k_ref * res.x(i), -kc[idx], kc[idx]);
    }

    const KktReport kkt = check_kkt(layout, state, input, out.state, op, options.inactive_eps);
    auto& d = out.diagnostics;
    d.iterations = res.iterations;
    d.kkt_residual = kkt.residual;
    d.max_box_ratio = kkt.max_box_ratio;
    d.max_current_error = kkt.max_current_error;
    const auto sat = saturated_mask(layout, out.state.k, options.inactive_eps);
    d.saturated = static_cast<int>(std::count(sat.begin(), sat.end(), true));
    const Eigen::VectorXd dk = (out.state.k - state.k) / k_ref;
    d.objective = box_qp_objective(qp, dk) * k_ref * k_ref * kMu0Over2Pi * kLengthUnit * kLengthUnit;
    if (!(kkt.residual <= options.kkt_tolerance))
        throw SolverError(fmt::format("KKT residual {:.3e} above tolerance {:.1e} after {} iterations",
                                      kkt.residual, options.kkt_tolerance, res.iterations),
                          kkt.residual, res.iterations);
    return out;
}

CriticalState field_cool(const ChipLayout& layout, const CriticalState& /*state*/, double b_perp,
                         const std::vector<double>& i_wire, const CoolOptions& options) {
    CriticalState s = CriticalState::normal(layout);
    if (i_wire.size() != layout.strips().size())
        throw ValidationError("field_cool: one current per strip expected");
    const bool any = std::any_of(i_wire.begin(), i_wire.end(), [](double i) { return i != 0.0; });
    if (any && !options.allow_transport)
        throw ValidationError("field_cool: transport currents must be zero at the transition");
    if (any) {
        check_targets(layout, i_wire);
        for (std::size_t st = 0; st < i_wire.size(); ++st) {
            const auto r = layout.elements_of(st);
            for (std::size_t i = r.begin; i < r.end; ++i)
                s.k(static_cast<Eigen::Index>(i)) = i_wire[st] / layout.strips()[st].width;
        }
        s.i_wire = i_wire;
    }
    s.a_ext_baseline = external_potential(layout, b_perp);
    s.superconducting = true;
    return s;
}

CriticalState transition_to_normal(const CriticalState& state) {
    CriticalState s = state;
    s.k.setZero();
    std::fill(s.i_wire.begin(), s.i_wire.end(), 0.0);
    s.superconducting = false;
    return s;
}

KktReport check_kkt(const ChipLayout& layout, const CriticalState& before, const StepInput& input,
                    const CriticalState& after, const InductanceOperator& op, double inactive_eps) {
    const auto elems = layout.elements();
    const auto kc = layout.critical_densities();
    const double a_scale = potential_scale(layout);
    const Eigen::VectorXd dk = after.k - before.k;
    const Eigen::VectorXd hdk = op.energy() * dk;

    // Objective gradient per unit width, in units of a_scale.
    Eigen::VectorXd g(dk.size());
    for (Eigen::Index i = 0; i < g.size(); ++i)
        g(i) = (hdk(i) / elems[static_cast<std::size_t>(i)].width + input.delta_a_ext(i)) / a_scale;
    const double norm = 1.0 + (input.delta_a_ext.size() ? input.delta_a_ext.cwiseAbs().maxCoeff() : 0.0) / a_scale;

    KktReport rep;
    const auto currents = strip_currents(layout, after.k);
    for (std::size_t s = 0; s < layout.strips().size(); ++s) {
        rep.max_current_error = std::max(rep.max_current_error, std::abs(currents[s] - input.i_target[s]));
        const auto r = layout.elements_of(s);
        double sum = 0.0;
        int interior = 0;
        double lo = -std::numeric_limits<double>::infinity();
        double hi = std::numeric_limits<double>::infinity();
        for (std::size_t i = r.begin; i < r.end; ++i) {
            const auto e = static_cast<Eigen::Index>(i);
            const double kk = after.k(e);
            if (std::abs(kk) < kc[i] * (1.0 - inactive_eps)) {
                sum += g(e);
                ++interior;
            } else if (kk > 0) {
                lo = std::max(lo, g(e));
            } else {
                hi = std::min(hi, g(e));
            }
        }
        double lambda = 0.0;
        if (interior > 0) lambda = sum / interior;
        else if (std::isfinite(lo) && std::isfinite(hi)) lambda = 0.5 * (lo + hi);
        else if (std::isfinite(lo)) lambda = lo;
        else if (std::isfinite(hi)) lambda = hi;
        for (std::size_t i = r.begin; i < r.end; ++i) {
            const auto e = static_cast<Eigen::Index>(i);
            const double kk = after.k(e);
            double res = 0.0;
            if (std::abs(kk) < kc[i] * (1.0 - inactive_eps)) res = std::abs(g(e) - lambda);
            else if (kk > 0) res = std::max(0.0, g(e) - lambda);
            else res = std::max(0.0, lambda - g(e));
            rep.residual = std::max(rep.residual, res / norm);
            rep.max_box_ratio = std::max(rep.max_box_ratio, std::abs(kk) / kc[i]);
        }
    }
    return rep;
}

}  // namespace beantrap
