#ifndef PROFILEFIT_ADDITIVE_DESIGN_HPP
#define PROFILEFIT_ADDITIVE_DESIGN_HPP

#include "profilefit/dataset.hpp"
#include "profilefit/spline_basis.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace profilefit {

inline constexpr const char* kIntercept = "intercept";

enum class Constraint { free_term, symmetric, constant };

std::string constraint_name(Constraint c);
Constraint constraint_from_name(const std::string& name);

struct ModelTerm {
    std::string covariate; // kIntercept or a covariate name
    Constraint constraint = Constraint::free_term;
};

/// Which radial-coefficient functions enter the additive log model and under
/// which constraint.  All spline terms share one basis.
struct AdditiveModelSpec {
    std::vector<ModelTerm> terms;
    SplineBasis basis;

    /// First term must be the intercept; covariates unique and known.
    void validate() const;
    int columns_for_term(std::size_t index) const;
    int total_columns() const;
    int term_index(const std::string& covariate) const; // -1 when absent

    std::string to_json() const;
    static AdditiveModelSpec from_json(const std::string& text);
};

/// Intercept spline plus constant-constrained coefficients for every listed
/// covariate: a pure magnitude shift in log space, the strictest form of
/// profile resilience.
AdditiveModelSpec profile_consistency_spec(const std::vector<std::string>& covariates,
                                           const SplineBasis& basis);

enum class FitScale { log_temperature, linear_temperature };

struct CorrelationModel {
    enum class Kind { independent, radial_ar1 };
    Kind kind = Kind::independent;
    double rho = 0.0;           // correlation decay per length_scale of |psi| distance
    double length_scale = 0.05; // within-profile radial scale of the AR(1) kernel
};

/// Per-term column block: coefficients beta map to basis coefficients through
/// `fold` (K x count), and the roughness penalty is fold' S fold.
struct TermLayout {
    int offset = 0;
    int count = 0;
    bool is_spline = false; // false for constant terms (no penalty, no lambda)
    Eigen::MatrixXd fold;
    Eigen::MatrixXd penalty;
};

/// The fully assembled weighted linear system over all profiles.  Rows cover
/// measured and augmented points; risk denominators use n_measured only.
struct DesignSystem {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    Eigen::VectorXd weight;      // D diagonal, 1/sigma_tilde^2
    Eigen::VectorXd sigma_tilde; // per-row error on the fit scale
    std::vector<char> measured;
    std::vector<std::pair<int, int>> profile_rows; // [begin, end) per record
    std::vector<double> row_psi;
    int n_measured = 0;

    FitScale scale = FitScale::log_temperature;
    CorrelationModel corr;
    AdditiveModelSpec spec;
    std::map<std::string, double> normalization;

    // Precomputed normal-equation pieces (deterministic per-profile sums).
    Eigen::MatrixXd C; // X' D X
    Eigen::VectorXd Xt_D_y;
    Eigen::MatrixXd K; // X' D Sigma D X under `corr`
    std::vector<TermLayout> layout;

    int cols() const { return int(X.cols()); }
    int rows() const { return int(X.rows()); }
};

DesignSystem build_design(const ProfileSet& set, const AdditiveModelSpec& spec,
                          FitScale scale = FitScale::log_temperature,
                          const CorrelationModel& corr = CorrelationModel{});

/// Column blocks, fold matrices, and folded penalties for a spec.
std::vector<TermLayout> make_term_layout(const AdditiveModelSpec& spec);

} // namespace profilefit

#endif
