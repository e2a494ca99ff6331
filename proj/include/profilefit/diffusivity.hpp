#ifndef PROFILEFIT_DIFFUSIVITY_HPP
#define PROFILEFIT_DIFFUSIVITY_HPP

#include "profilefit/errors.hpp"
#include "profilefit/fitted_model.hpp"
#include "profilefit/risk.hpp"

#include <string>
#include <vector>

namespace profilefit {

/// Fixed sinks and sources of one discharge, given on its own psi grid
/// (covering [0, 1]); the heat source is computed externally and treated as
/// data.  Covariates are taken from the matching profile record when absent.
struct DischargeConditions {
    std::string id;
    std::vector<double> psi_grid;
    std::vector<double> density;   // n(psi), 1e19/m^3
    std::vector<double> source;    // volumetric heat source per discharge
    double edge_temp = 0.0;        // T at psi = 1, eV
    double minor_radius = 0.0;     // a, m
    std::map<std::string, double> covariates;

    void validate() const;
};

std::vector<DischargeConditions> load_conditions(const std::string& path);
void write_conditions(const std::vector<DischargeConditions>& conditions,
                      const std::string& path);

struct ForwardSolution {
    std::vector<double> psi;         // uniform grid on [0, 1]
    std::vector<double> temperature; // eV
};

/// Steady-state cylindrical heat balance (1/r) d/dr (r n chi dT/dr) = -S with
/// dT/dr(0) = 0 and T(a) = edge_temp, integrated by the two-pass quadrature:
/// the flux integral F(r) = int_0^r S r' dr' followed by
/// T(r) = T_edge + int_r^a F/(r'' n chi) dr''.  Trapezoidal on a uniform
/// grid, second-order accurate.  The chi model is a log-additive
/// FittedModel of kind "diffusivity" on [0, 1].
ForwardSolution forward_temperature(const FittedModel& chi, const DischargeConditions& cond,
                                    int n_grid);

/// Model temperatures at arbitrary |psi| points (linear interpolation of the
/// grid solution); shared by the fitter, its Jacobian, and the tests.
std::vector<double> forward_at_points(const FittedModel& chi, const DischargeConditions& cond,
                                      const std::vector<double>& abs_psi, int n_grid);

/// Analytic sensitivities of those temperatures with respect to the model's
/// stored coefficients (basis coefficients per spline term, one value per
/// constant term; constraint ties are not collapsed).  Columns follow term
/// order.
Eigen::MatrixXd forward_jacobian_at_points(const FittedModel& chi,
                                           const DischargeConditions& cond,
                                           const std::vector<double>& abs_psi, int n_grid);

struct ChiFitOptions {
    int n_grid = 129;
    int max_iterations = 100;
    double objective_tolerance = 1e-8; // relative decrease that counts as converged
    int max_halvings = 30;
};

struct ChiFitResult {
    FittedModel model;
    RiskReport risk; // from the Gauss-Newton linearization at the optimum
    int iterations = 0;
    double objective = 0.0;
    bool converged = false;
};

/// Thrown when the line search stalls; carries the final iterate.
class ChiNonConvergenceError : public NonConvergenceError {
public:
    ChiNonConvergenceError(const std::string& msg, FittedModel iterate)
        : NonConvergenceError(msg), final_iterate(std::move(iterate)) {}
    FittedModel final_iterate;
};

/// Penalized Gauss-Newton fit of the log-additive diffusivity model through
/// the transport forward solve: residuals on measured temperatures, a
/// third-derivative penalty per radial coefficient function, analytic forward
/// sensitivities, and step halving on the penalized objective.
ChiFitResult fit_chi(const ProfileSet& set, const std::vector<DischargeConditions>& conditions,
                     const AdditiveModelSpec& structure, const std::vector<double>& lambdas,
                     const ChiFitOptions& options = ChiFitOptions{});

} // namespace profilefit

#endif
