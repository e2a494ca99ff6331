#include "profilefit/pwls_solver.hpp"
#include "profilefit/errors.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace profilefit {

namespace {

Eigen::MatrixXd penalized_matrix(const DesignSystem& sys, const std::vector<double>& lambdas) {
    if (lambdas.size() != sys.spec.terms.size())
        throw ValidationError("lambda vector length does not match the number of model terms");
    Eigen::MatrixXd M = sys.C;
    for (std::size_t t = 0; t < sys.layout.size(); ++t) {
        if (!sys.layout[t].is_spline)
            continue;
        if (!(lambdas[t] >= 0.0))
            throw ValidationError("smoothing parameters must be nonnegative");
        if (lambdas[t] > 0.0)
            M.block(sys.layout[t].offset, sys.layout[t].offset, sys.layout[t].count,
                    sys.layout[t].count) += lambdas[t] * sys.layout[t].penalty;
    }
    return M;
}

// Pivoted LDLT with an explicit positive-pivot check: strict positive
// definiteness without square roots, and diagonal toy problems factor
// exactly.
bool spd_factor(const Eigen::MatrixXd& M, Eigen::LDLT<Eigen::MatrixXd>& ldlt) {
    ldlt.compute(M);
    if (ldlt.info() != Eigen::Success)
        return false;
    const auto& D = ldlt.vectorD();
    for (Eigen::Index i = 0; i < D.size(); ++i)
        if (!(D[i] > 0.0) || !std::isfinite(D[i]))
            return false;
    return true;
}

// Tries to name the block whose diagonal sub-problem is not positive
// definite; collinearity across blocks otherwise.
[[noreturn]] void throw_rank_deficiency(const DesignSystem& sys, const Eigen::MatrixXd& M) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt;
    for (std::size_t t = 0; t < sys.layout.size(); ++t) {
        const auto& lay = sys.layout[t];
        if (!spd_factor(M.block(lay.offset, lay.offset, lay.count, lay.count), ldlt))
            throw RankDeficiencyError("normal equations are rank deficient in term block '" +
                                      sys.spec.terms[t].covariate + "'");
    }
    throw RankDeficiencyError(
        "normal equations are rank deficient (collinearity across term blocks)");
}

} // namespace

double penalized_objective(const DesignSystem& sys, const std::vector<double>& lambdas,
                           const Eigen::VectorXd& alpha) {
    const Eigen::VectorXd r = sys.y - sys.X * alpha;
    double obj = (r.array().square() * sys.weight.array()).sum();
    for (std::size_t t = 0; t < sys.layout.size(); ++t) {
        if (!sys.layout[t].is_spline || lambdas[t] == 0.0)
            continue;
        const auto a = alpha.segment(sys.layout[t].offset, sys.layout[t].count);
        obj += lambdas[t] * double(a.transpose() * sys.layout[t].penalty * a);
    }
    return obj;
}

FitResult solve(const DesignSystem& sys, const std::vector<double>& lambdas) {
    const int P = sys.cols();
    Eigen::MatrixXd M = penalized_matrix(sys, lambdas);

    Eigen::LDLT<Eigen::MatrixXd> ldlt;
    if (!spd_factor(M, ldlt)) {
        const double jitter = 1e-10 * sys.C.trace() / double(P);
        M.diagonal().array() += jitter;
        if (!spd_factor(M, ldlt))
            throw_rank_deficiency(sys, M);
    }

    FitResult fit;
    fit.lambdas = lambdas;
    fit.G = ldlt.solve(Eigen::MatrixXd::Identity(P, P));
    fit.alpha = ldlt.solve(sys.Xt_D_y);
    // one step of iterative refinement; matters when a huge smoothing
    // parameter makes the normal equations badly conditioned
    fit.alpha += ldlt.solve(sys.Xt_D_y - M * fit.alpha);
    fit.fitted = sys.X * fit.alpha;

    double rss = 0.0;
    for (int r = 0; r < sys.rows(); ++r) {
        if (!sys.measured[r])
            continue;
        const double e = sys.y[r] - fit.fitted[r];
        rss += sys.weight[r] * e * e;
    }
    fit.rss_weighted = rss;
    fit.tr_cg = (sys.C.array() * fit.G.array()).sum();
    fit.tr_kg = (sys.K.array() * fit.G.array()).sum();
    return fit;
}

FitResult solve(const DesignSystem& sys, double shared_lambda) {
    return solve(sys, std::vector<double>(sys.spec.terms.size(), shared_lambda));
}

Eigen::MatrixXd coefficient_covariance(const FitResult& fit, const DesignSystem& sys) {
    return fit.G * sys.K * fit.G;
}

} // namespace profilefit
