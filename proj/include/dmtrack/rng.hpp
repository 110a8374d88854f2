#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace dmtrack {

// Deterministic 64-bit PRNG (splitmix64, Steele et al.). Every random stream in
// this repo flows from one root seed through named sub-streams so that runs are
// reproducible bit-for-bit, including across reimplementations in other
// languages. The exact contracts:
//
//   next():    splitmix64 step.
//   uniform(): (next() >> 11) * 2^-53, in [0, 1).
//   normal():  Box-Muller, no caching. Draws u1 then u2 and returns
//              sqrt(-2 ln(1 - u1)) * cos(2*pi*u2). One normal consumes
//              exactly two next() calls.
//   poisson(): Knuth multiplication method; consumes one uniform per trial.
//
// Sub-stream derivation: derive_stream(root, label) seeds a child generator
// with splitmix64_mix(root XOR fnv1a64(label)). Labels used by this repo are
// documented where the streams are consumed (synth.hpp, training.hpp,
// model.hpp).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller (cosine branch only, no caching).
    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    // Poisson count via Knuth's multiplication method.
    int poisson(double rate) {
        const double limit = std::exp(-rate);
        int count = -1;
        double product = 1.0;
        do {
            product *= uniform();
            ++count;
        } while (product > limit);
        return count;
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

private:
    std::uint64_t state_;
};

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Child stream for a named subsystem. See the class comment for the contract.
inline Rng derive_stream(std::uint64_t root_seed, std::string_view label) {
    Rng mixer(root_seed ^ fnv1a64(label));
    return Rng(mixer.next());
}

}  // namespace dmtrack
