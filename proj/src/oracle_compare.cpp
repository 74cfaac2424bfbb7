#include "beantrap/error.hpp"
#include "beantrap/oracle.hpp"

#include <algorithm>
#include <cmath>

namespace beantrap {

double saturated_front(const ChipLayout& layout, const Eigen::VectorXd& k, double eps) {
    const auto sat = saturated_mask(layout, k, eps);
    const auto elems = layout.elements();
    const auto& strip = layout.strips()[0];
    double front = 0.5 * strip.width;
    for (std::size_t i = 0; i < elems.size(); ++i) {
        if (!sat[i]) continue;
        const double zl = elems[i].left() - strip.center_z;
        const double zr = elems[i].right() - strip.center_z;
        const double inner = (zl >= 0.0) ? zl : (zr <= 0.0 ? -zr : 0.0);
        front = std::min(front, inner);
    }
    return front;
}

OracleComparison compare_with_solver(const StripAnalyticCase& c, double element_width, int substeps,
                                     const SolverOptions& options) {
    if (substeps < 1) throw ValidationError("oracle comparison needs at least one substep");
    const AnalyticProfile profile(c);
    const bool transport = c.kind == StripAnalyticCase::Kind::transport;
    LayoutDescription d;
    d.element_width = element_width;
    d.strips.push_back({"strip", 0.0, 2.0 * c.half_width, c.k_c, transport});
    const auto layout = ChipLayout::build(d);
    const auto op = InductanceOperator::build(layout);

    CriticalState state = field_cool(layout, CriticalState::normal(layout), 0.0, {0.0});
    OracleComparison out;
    for (int s = 1; s <= substeps; ++s) {
        const double f0 = static_cast<double>(s - 1) / substeps;
        const double f1 = (s == substeps) ? 1.0 : static_cast<double>(s) / substeps;
        StepInput in;
        in.delta_a_ext = external_potential(layout, transport ? 0.0 : c.drive * (f1 - f0));
        in.i_target = {transport ? c.drive * f1 : 0.0};
        auto res = step(layout, state, in, op, options);
        state = std::move(res.state);
        auto& w = out.worst;
        w.iterations = std::max(w.iterations, res.diagnostics.iterations);
        w.saturated = res.diagnostics.saturated;
        w.kkt_residual = std::max(w.kkt_residual, res.diagnostics.kkt_residual);
        w.max_box_ratio = std::max(w.max_box_ratio, res.diagnostics.max_box_ratio);
        w.max_current_error = std::max(w.max_current_error, res.diagnostics.max_current_error);
    }

    const auto elems = layout.elements();
    std::vector<double> edges;
    for (const auto& e : elems) edges.push_back(e.left());
    edges.push_back(elems.back().right());
    out.average = element_averages(profile, edges);
    const auto rel_l2 = [&](const std::vector<double>& ref) {
        double diff2 = 0.0, ref2 = 0.0;
        for (std::size_t i = 0; i < elems.size(); ++i) {
            const double dk = state.k(static_cast<Eigen::Index>(i)) - ref[i];
            diff2 += dk * dk;
            ref2 += ref[i] * ref[i];
        }
        return ref2 > 0.0 ? std::sqrt(diff2 / ref2) : std::sqrt(diff2 / static_cast<double>(elems.size())) / c.k_c;
    };
    for (std::size_t i = 0; i < elems.size(); ++i) {
        const double kn = state.k(static_cast<Eigen::Index>(i));
        out.z.push_back(elems[i].center_z);
        out.numeric.push_back(kn);
        out.analytic.push_back(profile(elems[i].center_z));
        out.linf_error = std::max(out.linf_error, std::abs(kn - out.analytic.back()) / c.k_c);
    }
    out.l2_error = rel_l2(out.analytic);
    out.l2_error_average = rel_l2(out.average);
    out.front_numeric = saturated_front(layout, state.k, options.inactive_eps);
    out.front_analytic = profile.front();
    out.current_numeric = strip_currents(layout, state.k)[0];
    out.current_analytic = transport ? c.drive : 0.0;
    return out;
}

}  // namespace beantrap
