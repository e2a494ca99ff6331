#include "profilefit/risk.hpp"
#include "profilefit/errors.hpp"
#include "profilefit/parallel.hpp"

#include <cmath>

namespace profilefit {

double trace_product(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    // trace(A B) for symmetric A, B.
    return (A.array() * B.array()).sum();
}

Eigen::MatrixXd autocorr_K(const DesignSystem& sys, const CorrelationModel& corr) {
    const int P = sys.cols();
    if (corr.kind == CorrelationModel::Kind::independent || corr.rho == 0.0)
        return sys.C;
    if (!(corr.rho >= 0.0 && corr.rho < 1.0))
        throw ValidationError("correlation rho must lie in [0, 1)");
    if (!(corr.length_scale > 0.0))
        throw ValidationError("correlation length scale must be positive");

    const std::size_t n_profiles = sys.profile_rows.size();
    std::vector<Eigen::MatrixXd> Ki(n_profiles);
    parallel_for(std::ptrdiff_t(n_profiles), [&](std::ptrdiff_t i) {
        const auto [rb, re] = sys.profile_rows[i];
        const int m = re - rb;
        // (D Sigma D)_jk = rho^(|psi_j - psi_k| / h0) / (sig_j sig_k)
        Eigen::MatrixXd DSD(m, m);
        for (int a = 0; a < m; ++a) {
            for (int b = 0; b <= a; ++b) {
                const double dist = std::abs(sys.row_psi[rb + a] - sys.row_psi[rb + b]);
                const double v = std::pow(corr.rho, dist / corr.length_scale) /
                                 (sys.sigma_tilde[rb + a] * sys.sigma_tilde[rb + b]);
                DSD(a, b) = v;
                DSD(b, a) = v;
            }
        }
        const auto Xi = sys.X.middleRows(rb, m);
        Ki[i] = Xi.transpose() * DSD * Xi;
    });
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(P, P);
    for (std::size_t i = 0; i < n_profiles; ++i)
        K += Ki[i];
    return K;
}

double ease_estimate(const FitResult& fit, const Eigen::MatrixXd& K, int n_measured) {
    if (n_measured <= 0)
        throw ValidationError("ease_estimate requires a positive measured count");
    const double tr = trace_product(K, fit.G);
    return fit.rss_weighted - (double(n_measured) - 2.0 * tr);
}

namespace {

// A denominator at the roundoff scale of N is an exhausted boundary case, not
// a usable number of degrees of freedom.
bool exhausted(double denom, int n_measured) {
    return !(denom > 1e-9 * double(n_measured));
}

} // namespace

double sigma2_cw(const FitResult& fit, const Eigen::MatrixXd& K, int n_measured) {
    const double denom = double(n_measured) - trace_product(K, fit.G);
    if (exhausted(denom, n_measured))
        throw SaturationError("effective number of degrees of freedom exhausted: N - tr[K G] = " +
                              std::to_string(denom));
    return fit.rss_weighted / denom;
}

double gcv(const FitResult& fit, const Eigen::MatrixXd& K, int n_measured) {
    const double denom = double(n_measured) - trace_product(K, fit.G);
    if (exhausted(denom, n_measured))
        throw SaturationError("effective number of degrees of freedom exhausted: N - tr[K G] = " +
                              std::to_string(denom));
    return double(n_measured) * fit.rss_weighted / (denom * denom);
}

double rice(const FitResult& fit, const Eigen::MatrixXd& K, int n_measured) {
    const double denom = double(n_measured) - 2.0 * trace_product(K, fit.G);
    if (exhausted(denom, n_measured))
        throw OverParameterizationError(
            "model too rich for the data: N - 2 tr[K G] = " + std::to_string(denom) +
            "; the candidate is inadmissible under the Rice criterion");
    return fit.rss_weighted / denom;
}

double chi2_stat(const FitResult& fit, const Eigen::MatrixXd& K, int n_measured) {
    return sigma2_cw(fit, K, n_measured);
}

RiskReport risk_report(const FitResult& fit, const Eigen::MatrixXd& K, int n_measured) {
    RiskReport rep;
    rep.n_measured = n_measured;
    rep.dof_effective = double(n_measured) - trace_product(K, fit.G);
    rep.ease_cw = ease_estimate(fit, K, n_measured);
    rep.sigma2_cw = sigma2_cw(fit, K, n_measured);
    rep.chi2 = rep.sigma2_cw;
    rep.gcv = gcv(fit, K, n_measured);
    rep.rice = rice(fit, K, n_measured);
    return rep;
}

} // namespace profilefit
