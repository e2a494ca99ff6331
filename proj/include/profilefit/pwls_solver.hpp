#ifndef PROFILEFIT_PWLS_SOLVER_HPP
#define PROFILEFIT_PWLS_SOLVER_HPP

#include "profilefit/additive_design.hpp"

#include <Eigen/Dense>

#include <vector>

namespace profilefit {

/// Solution of the penalized weighted least-squares problem together with the
/// hat-matrix algebra the risk estimators consume.
struct FitResult {
    Eigen::VectorXd alpha;        // coefficient estimate
    std::vector<double> lambdas;  // per-term smoothing parameters
    Eigen::MatrixXd G;            // [X' D X + sum_l lambda_l S_l]^(-1)
    double tr_cg = 0.0;           // trace(C G)
    double tr_kg = 0.0;           // trace(K G)
    double rss_weighted = 0.0;    // weighted residual sum over measured rows
    Eigen::VectorXd fitted;       // X alpha, per design row
};

/// Minimizes (y - X a)' D (y - X a) + sum_l lambda_l a_l' S_l a_l.
/// One round of diagonal jitter (1e-10 tr(C)/P) is attempted before a
/// RankDeficiencyError naming the offending term block is thrown.
FitResult solve(const DesignSystem& system, const std::vector<double>& lambdas);

/// Shared smoothing parameter across all spline terms.
FitResult solve(const DesignSystem& system, double shared_lambda);

/// Covariance of the coefficient estimate: G K G.
Eigen::MatrixXd coefficient_covariance(const FitResult& fit, const DesignSystem& system);

/// Value of the penalized objective at an arbitrary coefficient vector.
double penalized_objective(const DesignSystem& system, const std::vector<double>& lambdas,
                           const Eigen::VectorXd& alpha);

} // namespace profilefit

#endif
