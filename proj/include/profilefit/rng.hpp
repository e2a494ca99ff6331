#ifndef PROFILEFIT_RNG_HPP
#define PROFILEFIT_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace profilefit {

// Deterministic random source.  mt19937_64 has a portable bit stream, but the
// standard distributions do not, so the samplers are implemented here and the
// whole pipeline stays byte-reproducible for a given seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    double log_uniform(double lo, double hi) {
        return std::exp(uniform(std::log(lo), std::log(hi)));
    }

    // Box-Muller without a cached spare, so consumption is one value per call
    // and independent of call history.
    double normal() {
        const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53; // (0, 1]
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    // Independent stream for parallel work items: mixes the stream id through
    // splitmix64 so item k gets the same draws regardless of thread count or
    // of what other streams consumed.
    Rng stream(std::uint64_t id) const {
        std::uint64_t z = seed_ + (id + 1) * 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return Rng(z ^ (z >> 31));
    }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
};

} // namespace profilefit

#endif
