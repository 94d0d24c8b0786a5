#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace rvdr {

// Seed derivation for independent sub-streams (per scene, per tick, ...).
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
    return splitmix64(master ^ splitmix64(stream + 1));
}

// mt19937_64 with in-house value transforms. The standard engine is
// bit-portable; the standard distributions are not, so the mappings from
// raw 64-bit draws to doubles are spelled out here.
class Rng {
  public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    uint64_t index(uint64_t n) {
        // Modulo bias is negligible for n << 2^64 and keeps the draw count fixed.
        return engine_() % n;
    }

    // Standard normal via Box-Muller; one value per call, no cached spare.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

  private:
    std::mt19937_64 engine_;
};

}  // namespace rvdr
