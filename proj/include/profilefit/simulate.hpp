#ifndef PROFILEFIT_SIMULATE_HPP
#define PROFILEFIT_SIMULATE_HPP

#include "profilefit/fitted_model.hpp"
#include "profilefit/reference.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace profilefit {

/// Synthetic-profile generator: covariates drawn log-uniform (or uniform for
/// the linear ones) within the configured ranges, ~points_per_profile radial
/// samples on a jittered grid, multiplicative log-normal noise, and reported
/// errors sigma = noise_rel * observed temperature.  Fully determined by the
/// seed; profile k draws from its own stream, so generation order and thread
/// count do not matter.
struct SimulationConfig {
    int n_profiles = 43;
    double noise_rel = 0.10;
    int points_per_profile = 50;
    double psi_min = -0.95;
    double psi_max = 0.98;
    std::uint64_t seed = 1;
    std::map<std::string, CovariateRange> ranges = jet_reference_covariate_ranges();
};

ProfileSet simulate_profiles(const FittedModel& model, const SimulationConfig& config);

} // namespace profilefit

#endif
