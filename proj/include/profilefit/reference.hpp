#ifndef PROFILEFIT_REFERENCE_HPP
#define PROFILEFIT_REFERENCE_HPP

#include "profilefit/fitted_model.hpp"

#include <map>
#include <string>
#include <vector>

namespace profilefit {

/// Published JET Ohmic profile parameterization, bundled as golden data for
/// synthetic round-trip studies: radial coefficient functions tabulated on
/// psi = -1.0(0.1)1.0 plus the reference values the covariates were
/// normalized with.

const std::vector<double>& jet_reference_psi();

/// Tabulated radial functions keyed "intercept", "Ip", "Bt", "nbar", "qgeo".
const std::map<std::string, std::vector<double>>& jet_reference_tables();

/// Normalization constants of the five-term parameterization.
std::map<std::string, double> jet_reference_normalization();

/// Five free spline terms interpolating the tables exactly at the tabulated
/// radii (log scale, eV).
FittedModel jet_reference_model();

/// Reduced variant: free intercept and q95 shape plus constant Ip/Bt/nbar
/// coefficients.
FittedModel jet_reference_reduced_model();

struct CovariateRange {
    double lo = 0.0;
    double hi = 0.0;
    bool log_sample = true;
};

/// Observed covariate ranges of the JET Ohmic database (li and time are
/// artifact defaults; they are absent from the published summary).
std::map<std::string, CovariateRange> jet_reference_covariate_ranges();

} // namespace profilefit

#endif
