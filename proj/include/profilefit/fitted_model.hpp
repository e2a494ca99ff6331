#ifndef PROFILEFIT_FITTED_MODEL_HPP
#define PROFILEFIT_FITTED_MODEL_HPP

#include "profilefit/additive_design.hpp"
#include "profilefit/pwls_solver.hpp"
#include "profilefit/risk.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace profilefit {

struct FittedTerm {
    std::string covariate;
    Constraint constraint = Constraint::free_term;
    // Unfolded basis coefficients for spline terms (length K); a single
    // value for constant terms.
    Eigen::VectorXd coefficients;
    double lambda = 0.0;
};

struct FitMetrics {
    double mae_ev = 0.0;   // mean absolute error in original units
    double mae_pct = 0.0;  // MAE as percent of the mean line-average temperature
    double rmse_log = 0.0; // RMS of log-scale residuals
};

/// A fitted additive model, either of log-temperature ("temperature") or of
/// log-diffusivity ("diffusivity").  Carries its own normalization
/// references; they are never re-derived from prediction inputs.
struct FittedModel {
    std::string kind = "temperature";
    FitScale scale = FitScale::log_temperature;
    SplineBasis basis;
    std::vector<FittedTerm> terms;
    std::map<std::string, double> normalization;

    double tr_cg = 0.0, tr_kg = 0.0;
    std::optional<RiskReport> risk;
    std::optional<FitMetrics> metrics;

    /// Radial coefficient function of term t at psi.
    double term_value(std::size_t t, double psi) const;

    /// The additive response sum_l f_l(psi) h_l(u) from raw covariates.
    double additive_response(double psi, const std::map<std::string, double>& raw) const;

    /// Temperature (or diffusivity) in original units: exp of the additive
    /// response for log-scale models, the response itself otherwise.
    double predict(double psi, const std::map<std::string, double>& raw) const;

    int term_index(const std::string& covariate) const; // -1 when absent
    AdditiveModelSpec to_spec() const;

    std::string to_json() const;
    static FittedModel from_json(const std::string& text);
    void save(const std::string& path) const;
    static FittedModel load(const std::string& path);
};

/// Pack a solver result into a portable model.
FittedModel assemble_model(const DesignSystem& system, const FitResult& fit,
                           const std::string& kind = "temperature");

/// MAE / relative MAE / log RMSE of a model over the measured points of a set.
FitMetrics fit_metrics(const ProfileSet& set, const FittedModel& model);

/// Mean over profiles of the measured-point average temperature.
double mean_line_average_temperature(const ProfileSet& set);

/// MAE as a fraction of a reference temperature (the quoted-percent metric).
double mae_fraction(double mae_ev, double reference_temperature_ev);

} // namespace profilefit

#endif
