#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace beantrap {

// Contiguous block of variables sharing one linear equality
//   sum_{i in block} weight_i * x_i = rhs.
struct EqualityGroup {
    std::size_t begin = 0;
    std::size_t end = 0;
    double rhs = 0.0;
};

/// Convex QP with box bounds and block-separable equalities:
///
///   minimize   ½ xᵀ H x + cᵀ x
///   subject to lower <= x <= upper,
///              Σ_{i∈g} weight_i x_i = rhs_g   for every group g.
///
/// H must be symmetric positive definite. Groups must be disjoint and cover
/// every variable; weights must be positive.
struct BoxQP {
    Eigen::MatrixXd hessian;
    Eigen::VectorXd linear;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    Eigen::VectorXd weight;
    std::vector<EqualityGroup> groups;
};

enum class BoundState : signed char { lower = -1, free = 0, upper = 1 };

struct BoxQPResult {
    Eigen::VectorXd x;
    std::vector<BoundState> active;
    std::vector<double> group_multipliers;
    int iterations = 0;
    bool converged = false;
};

struct BoxQPOptions {
    int max_iterations = 0;           // 0 → 20·n + 100
    double multiplier_tolerance = 1e-12;
};

/// Primal active-set method warm-started from `start`.
///
/// `start` must satisfy the bounds. If it violates the equalities a feasible
/// point is built by moving each group proportionally toward the bound on the
/// side of its deficit. Variables of `start` that sit exactly on a bound seed
/// the working set. Throws FeasibilityError (with the group index as the name)
/// when a group's rhs cannot be met inside the box.
BoxQPResult solve_box_qp(const BoxQP& problem, const Eigen::VectorXd& start,
                         const BoxQPOptions& options = {});

/// Objective value ½ xᵀHx + cᵀx.
double box_qp_objective(const BoxQP& problem, const Eigen::VectorXd& x);

}  // namespace beantrap
