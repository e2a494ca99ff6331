#include "profilefit/simulate.hpp"
#include "profilefit/errors.hpp"
#include "profilefit/parallel.hpp"
#include "profilefit/rng.hpp"

#include <algorithm>
#include <cmath>

namespace profilefit {

ProfileSet simulate_profiles(const FittedModel& model, const SimulationConfig& config) {
    if (config.n_profiles < 1)
        throw ValidationError("simulate requires at least one profile");
    if (!(config.noise_rel >= 0.0))
        throw ValidationError("relative noise must be nonnegative");
    if (config.points_per_profile < 4)
        throw ValidationError("profiles need at least 4 points");
    if (!(config.psi_max > config.psi_min))
        throw ValidationError("psi range is empty");

    const Rng root(config.seed);
    ProfileSet set;
    set.records.resize(config.n_profiles);

    const double span = config.psi_max - config.psi_min;
    const int npts = config.points_per_profile;
    const double cell = span / double(npts);
    // Reported error bars never vanish, or the records would be invalid.
    const double sigma_rel = std::max(config.noise_rel, 1e-6);

    parallel_for(config.n_profiles, [&](std::ptrdiff_t i) {
        Rng rng = root.stream(std::uint64_t(i));
        ProfileRecord rec;
        rec.id = "sim-" + std::to_string(config.seed) + "-" + std::to_string(i);

        for (const auto& [name, range] : config.ranges) {
            rec.covariates[name] = range.log_sample ? rng.log_uniform(range.lo, range.hi)
                                                    : rng.uniform(range.lo, range.hi);
        }

        rec.psi.resize(npts);
        for (int j = 0; j < npts; ++j) {
            const double center = config.psi_min + (double(j) + 0.5) * cell;
            rec.psi[j] = center + 0.4 * cell * (2.0 * rng.uniform01() - 1.0);
        }
        std::sort(rec.psi.begin(), rec.psi.end());

        rec.temp.resize(npts);
        rec.sigma.resize(npts);
        rec.augmented.assign(npts, 0);
        for (int j = 0; j < npts; ++j) {
            const double truth = model.predict(rec.psi[j], rec.covariates);
            if (!(truth > 0.0))
                throw DomainError("model predicts a nonpositive temperature at psi = " +
                                  std::to_string(rec.psi[j]));
            const double observed = truth * std::exp(config.noise_rel * rng.normal());
            rec.temp[j] = observed;
            rec.sigma[j] = sigma_rel * observed;
        }
        set.records[i] = std::move(rec);
    });

    set.normalization = compute_normalization(set.records);
    return set;
}

} // namespace profilefit
