#ifndef PROFILEFIT_RISK_HPP
#define PROFILEFIT_RISK_HPP

#include "profilefit/additive_design.hpp"
#include "profilefit/pwls_solver.hpp"

#include <Eigen/Dense>

namespace profilefit {

/// Risk summary of one fit.  All denominators use the measured-point count;
/// augmented rows never enter them.
struct RiskReport {
    double ease_cw = 0.0;        // estimated expected average square error
    double gcv = 0.0;            // N rss / (N - tr[K G])^2
    double rice = 0.0;           // rss / (N - 2 tr[K G])
    double chi2 = 0.0;           // rss / (N - tr[K G])
    double sigma2_cw = 0.0;      // same formula as chi2 under this weighting
    double dof_effective = 0.0;  // N - tr[K G]
    int n_measured = 0;
};

/// X' D Sigma D X with Sigma block-diagonal per profile,
/// Sigma_jk = sig_j sig_k rho^(|psi_j - psi_k| / length_scale).
/// Independent errors (or rho = 0) give back C = X' D X exactly.
Eigen::MatrixXd autocorr_K(const DesignSystem& system, const CorrelationModel& corr);

/// Craven-Wahba estimate of the expected average square error:
/// rss - (N - 2 tr[K G]).  May legitimately be negative.
double ease_estimate(const FitResult& fit, const Eigen::MatrixXd& K, int n_measured);

/// rss / (N - tr[K G]); throws SaturationError when the effective number of
/// degrees of freedom is exhausted.
double sigma2_cw(const FitResult& fit, const Eigen::MatrixXd& K, int n_measured);

/// N rss / (N - tr[K G])^2; throws SaturationError as above.
double gcv(const FitResult& fit, const Eigen::MatrixXd& K, int n_measured);

/// rss / (N - 2 tr[K G]); throws OverParameterizationError when the
/// denominator is nonpositive (model too rich; selection must treat the
/// candidate as inadmissible).
double rice(const FitResult& fit, const Eigen::MatrixXd& K, int n_measured);

/// Mean square error per effective degree of freedom.
double chi2_stat(const FitResult& fit, const Eigen::MatrixXd& K, int n_measured);

RiskReport risk_report(const FitResult& fit, const Eigen::MatrixXd& K, int n_measured);

double trace_product(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

} // namespace profilefit

#endif
