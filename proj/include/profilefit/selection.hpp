#ifndef PROFILEFIT_SELECTION_HPP
#define PROFILEFIT_SELECTION_HPP

#include "profilefit/fitted_model.hpp"
#include "profilefit/risk.hpp"

#include <map>
#include <string>
#include <vector>

namespace profilefit {

enum class Criterion { rice, gcv };

std::string criterion_name(Criterion c);
Criterion criterion_from_name(const std::string& name);

/// Geometric grid of smoothing-parameter factors; the factors multiply the
/// per-term scale tr(C_ll)/tr(S_l), which makes the default scale-free.
struct LambdaGrid {
    double lo = 1e-6;
    double hi = 1e6;
    int n = 25;

    std::vector<double> factors() const;
};

struct LambdaChoice {
    std::vector<double> lambdas; // one per term; zero for constant terms
    double criterion_value = 0.0;
    FitResult fit;
};

/// Coordinate descent over the per-term grid: each pass sweeps every spline
/// term and re-picks its grid point with the others held fixed; stops when a
/// full pass changes nothing.  Candidates with an invalid criterion
/// (exhausted degrees of freedom) are skipped; if no grid point at all is
/// admissible an OverParameterizationError is thrown.
LambdaChoice optimize_lambdas(const DesignSystem& system, Criterion criterion,
                              const LambdaGrid& grid = LambdaGrid{});

struct SelectionStage {
    std::map<std::string, double> candidate_values; // NaN marks inadmissible
    std::map<std::string, double> candidate_dof;    // tr[K G] at each candidate's optimum
    std::string winner;
    double winner_value = 0.0;
    bool accepted = false;
};

struct SelectionTrace {
    Criterion criterion = Criterion::rice;
    double intercept_value = 0.0; // stage-0 (intercept only) criterion value
    std::vector<SelectionStage> stages;
    std::vector<std::string> chosen;
    std::string stop_reason; // no-improvement | max-terms | all-inadmissible
    std::vector<std::string> warnings;

    std::string to_json() const;
    /// Stage-by-candidate text matrix ("seed" marks inherited variables,
    /// '*' the stage winner, '-' inadmissible candidates).
    std::string render_table(const std::vector<std::string>& candidates) const;
};

struct ForwardSelectOptions {
    int max_stages = 6;
    double min_relative_improvement = 0.01;
    // Derived covariates can be exact linear combinations of candidates
    // already in the model (qgeo vs q95 once Ip and Bt are in), which makes
    // two candidate models span the same space and leaves the criterion
    // values within noise of each other.  Candidates within this relative
    // band of the best are treated as tied and the one needing fewer
    // effective degrees of freedom wins.
    double tie_tolerance = 0.005;
    Criterion criterion = Criterion::rice;
    LambdaGrid grid;
    FitScale scale = FitScale::log_temperature;
    CorrelationModel corr;
    int n_interior_knots = 20;
    double edge_thinning = 2.0;
};

/// Greedy forward search: at each stage every remaining candidate is added to
/// the current seed set (all free spline terms), fitted with its own
/// smoothing-parameter optimization, and the criterion minimizer wins (ties
/// resolved toward fewer effective degrees of freedom).  Stops on
/// insufficient relative improvement, stage budget, or a stage with no
/// admissible candidate.
SelectionTrace forward_select(const ProfileSet& set, const std::vector<std::string>& candidates,
                              const ForwardSelectOptions& options = ForwardSelectOptions{});

struct VariantReport {
    double criterion_value = 0.0;
    double mae_ev = 0.0;
    FittedModel model;
};

struct ComparisonReport {
    std::string term;
    VariantReport baseline; // term as given in the spec
    VariantReport variant;  // constrained alternative
    std::string recommendation; // "baseline" or "variant"
    double constant_value = 0.0; // reduce_to_constant only
    double constant_se = 0.0;    // standard error from the coefficient covariance
};

/// Free-vs-symmetric comparison for one spline term, each side with its own
/// smoothing optimization.  The term must currently be free.
ComparisonReport test_symmetry(const ProfileSet& set, const AdditiveModelSpec& spec,
                               const std::string& term, Criterion criterion = Criterion::rice,
                               const LambdaGrid& grid = LambdaGrid{},
                               FitScale scale = FitScale::log_temperature,
                               const CorrelationModel& corr = CorrelationModel{});

/// Spline-vs-constant comparison for one term; reports the fitted constant
/// with its standard error.
ComparisonReport reduce_to_constant(const ProfileSet& set, const AdditiveModelSpec& spec,
                                    const std::string& term, Criterion criterion = Criterion::rice,
                                    const LambdaGrid& grid = LambdaGrid{},
                                    FitScale scale = FitScale::log_temperature,
                                    const CorrelationModel& corr = CorrelationModel{});

} // namespace profilefit

#endif
