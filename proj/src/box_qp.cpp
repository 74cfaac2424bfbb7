#include "beantrap/box_qp.hpp"

#include "beantrap/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace beantrap {

namespace {

struct Eqp {
    Eigen::VectorXd step;                 // full length, zero on the working set
    std::vector<double> multipliers;      // per group; NaN for groups with no free variable
};

// Equality-constrained subproblem on the free variables.
Eqp solve_eqp(const BoxQP& qp, const std::vector<BoundState>& active,
              const Eigen::VectorXd& grad) {
    const auto n = static_cast<std::size_t>(grad.size());
    std::vector<Eigen::Index> free_idx;
    free_idx.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        if (active[i] == BoundState::free) free_idx.push_back(static_cast<Eigen::Index>(i));

    Eqp out;
    out.step = Eigen::VectorXd::Zero(grad.size());
    out.multipliers.assign(qp.groups.size(), std::numeric_limits<double>::quiet_NaN());
    const auto nf = static_cast<Eigen::Index>(free_idx.size());
    if (nf == 0) return out;

    // Map each group with free variables to a row of A_F.
    std::vector<int> row_of_group(qp.groups.size(), -1);
    std::vector<int> group_of_free(free_idx.size());
    int rows = 0;
    for (std::size_t g = 0; g < qp.groups.size(); ++g) {
        for (std::size_t f = 0; f < free_idx.size(); ++f) {
            const auto i = static_cast<std::size_t>(free_idx[f]);
            if (i >= qp.groups[g].begin && i < qp.groups[g].end) {
                if (row_of_group[g] < 0) row_of_group[g] = rows++;
                group_of_free[f] = static_cast<int>(g);
            }
        }
    }

    Eigen::MatrixXd hff(nf, nf);
    Eigen::VectorXd gf(nf);
    Eigen::MatrixXd aft = Eigen::MatrixXd::Zero(nf, rows);
    for (Eigen::Index a = 0; a < nf; ++a) {
        gf(a) = grad(free_idx[a]);
        for (Eigen::Index b = 0; b < nf; ++b) hff(a, b) = qp.hessian(free_idx[a], free_idx[b]);
        aft(a, row_of_group[group_of_free[a]]) = qp.weight(free_idx[a]);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(hff);
    if (llt.info() != Eigen::Success)
        throw SolverError("reduced Hessian is not positive definite", 0.0, 0);

    const Eigen::VectorXd z = llt.solve(gf);
    const Eigen::MatrixXd hinv_at = llt.solve(aft);
    const Eigen::MatrixXd schur = aft.transpose() * hinv_at;
    const Eigen::VectorXd lambda = schur.ldlt().solve(aft.transpose() * z);
    const Eigen::VectorXd pf = hinv_at * lambda - z;

    for (Eigen::Index a = 0; a < nf; ++a) out.step(free_idx[a]) = pf(a);
    for (std::size_t g = 0; g < qp.groups.size(); ++g)
        if (row_of_group[g] >= 0) out.multipliers[g] = lambda(row_of_group[g]);
    return out;
}

// Sign-corrected bound multiplier per unit weight: must be >= 0 at optimality.
double bound_multiplier(BoundState s, double grad, double weight, double lambda) {
    const double m = grad / weight - lambda;
    return s == BoundState::lower ? m : -m;
}

// For a group whose variables are all on bounds, pick a multiplier in the
// interval allowed by the bounds (midpoint), or the best compromise if empty.
double pinned_group_multiplier(const BoxQP& qp, const EqualityGroup& g,
                               const std::vector<BoundState>& active,
                               const Eigen::VectorXd& grad) {
    double lo = -std::numeric_limits<double>::infinity();  // from upper-bound variables
    double hi = std::numeric_limits<double>::infinity();   // from lower-bound variables
    for (std::size_t i = g.begin; i < g.end; ++i) {
        const auto e = static_cast<Eigen::Index>(i);
        const double r = grad(e) / qp.weight(e);
        if (active[i] == BoundState::upper) lo = std::max(lo, r);
        if (active[i] == BoundState::lower) hi = std::min(hi, r);
    }
    if (std::isinf(lo) && std::isinf(hi)) return 0.0;
    if (std::isinf(lo)) return hi;
    if (std::isinf(hi)) return lo;
    return 0.5 * (lo + hi);
}

void make_feasible(const BoxQP& qp, Eigen::VectorXd& x) {
    for (std::size_t g = 0; g < qp.groups.size(); ++g) {
        const auto& grp = qp.groups[g];
        double sum = 0.0;
        double scale = 0.0;
        for (std::size_t i = grp.begin; i < grp.end; ++i) {
            const auto e = static_cast<Eigen::Index>(i);
            sum += qp.weight(e) * x(e);
            scale += qp.weight(e) * std::max(std::abs(qp.lower(e)), std::abs(qp.upper(e)));
        }
        const double deficit = grp.rhs - sum;
        if (std::abs(deficit) <= 1e-15 * std::max(scale, 1.0)) continue;
        double room = 0.0;
        for (std::size_t i = grp.begin; i < grp.end; ++i) {
            const auto e = static_cast<Eigen::Index>(i);
            room += qp.weight(e) * (deficit > 0 ? qp.upper(e) - x(e) : x(e) - qp.lower(e));
        }
        if (std::abs(deficit) > room * (1.0 + 1e-12) + 1e-15 * scale)
            throw FeasibilityError(std::to_string(g),
                                   fmt::format("group {} equality {:.6g} is outside the box", g, grp.rhs));
        const double t = std::min(1.0, std::abs(deficit) / room);
        for (std::size_t i = grp.begin; i < grp.end; ++i) {
            const auto e = static_cast<Eigen::Index>(i);
            if (deficit > 0)
                x(e) = (t == 1.0) ? qp.upper(e) : x(e) + t * (qp.upper(e) - x(e));
            else
                x(e) = (t == 1.0) ? qp.lower(e) : x(e) - t * (x(e) - qp.lower(e));
        }
    }
}

}  // namespace

double box_qp_objective(const BoxQP& problem, const Eigen::VectorXd& x) {
    return 0.5 * x.dot(problem.hessian * x) + problem.linear.dot(x);
}

BoxQPResult solve_box_qp(const BoxQP& qp, const Eigen::VectorXd& start,
                         const BoxQPOptions& options) {
    const auto n = static_cast<std::size_t>(start.size());
    BoxQPResult res;
    res.x = start;
    for (std::size_t i = 0; i < n; ++i) {
        const auto e = static_cast<Eigen::Index>(i);
        res.x(e) = std::clamp(res.x(e), qp.lower(e), qp.upper(e));
    }
    make_feasible(qp, res.x);

    res.active.assign(n, BoundState::free);
    for (std::size_t i = 0; i < n; ++i) {
        const auto e = static_cast<Eigen::Index>(i);
        if (res.x(e) == qp.lower(e)) res.active[i] = BoundState::lower;
        else if (res.x(e) == qp.upper(e)) res.active[i] = BoundState::upper;
    }

    const int max_iter = options.max_iterations > 0 ? options.max_iterations
                                                    : static_cast<int>(20 * n + 100);
    Eigen::VectorXd grad = qp.hessian * res.x + qp.linear;
    double worst = 0.0;
    for (int iter = 0; iter < max_iter; ++iter) {
        res.iterations = iter + 1;
        Eqp eqp = solve_eqp(qp, res.active, grad);

        double alpha = 1.0;
        std::size_t blocking = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (res.active[i] != BoundState::free) continue;
            const auto e = static_cast<Eigen::Index>(i);
            const double p = eqp.step(e);
            if (p > 0.0) {
                const double a = (qp.upper(e) - res.x(e)) / p;
                if (a < alpha) { alpha = a; blocking = i; }
            } else if (p < 0.0) {
                const double a = (qp.lower(e) - res.x(e)) / p;
                if (a < alpha) { alpha = a; blocking = i; }
            }
        }
        alpha = std::max(alpha, 0.0);

        if (blocking < n) {
            res.x += alpha * eqp.step;
            const auto e = static_cast<Eigen::Index>(blocking);
            const bool up = eqp.step(e) > 0.0;
            res.x(e) = up ? qp.upper(e) : qp.lower(e);
            res.active[blocking] = up ? BoundState::upper : BoundState::lower;
            grad = qp.hessian * res.x + qp.linear;
            continue;
        }

        // Full step: x is the minimizer on the current working set.
        res.x += eqp.step;
        grad = qp.hessian * res.x + qp.linear;
        for (std::size_t g = 0; g < qp.groups.size(); ++g)
            if (std::isnan(eqp.multipliers[g]))
                eqp.multipliers[g] = pinned_group_multiplier(qp, qp.groups[g], res.active, grad);

        const double tol = options.multiplier_tolerance * (1.0 + grad.cwiseAbs().maxCoeff());
        worst = 0.0;
        std::size_t release = n;
        for (std::size_t g = 0; g < qp.groups.size(); ++g) {
            for (std::size_t i = qp.groups[g].begin; i < qp.groups[g].end; ++i) {
                if (res.active[i] == BoundState::free) continue;
                const auto e = static_cast<Eigen::Index>(i);
                const double m = bound_multiplier(res.active[i], grad(e), qp.weight(e),
                                                  eqp.multipliers[g]);
                if (m < worst) { worst = m; release = i; }
            }
        }
        res.group_multipliers = eqp.multipliers;
        if (release == n || worst >= -tol) {
            res.converged = true;
            return res;
        }
        res.active[release] = BoundState::free;
    }
    throw SolverError(fmt::format("active-set QP did not converge in {} iterations", max_iter),
                      -worst, res.iterations);
}

}  // namespace beantrap
