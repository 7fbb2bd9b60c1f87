#pragma once

#include <cstdint>
#include <random>

namespace fairsad {

// Explicit random stream. Distributions are computed here rather than through
// <random> distribution objects so that sequences are identical across
// standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    // Independent child stream; depends only on (seed, stream id).
    Rng split(std::uint64_t stream) const;

    std::uint64_t seed() const { return seed_; }
    std::uint64_t next_u64() { return engine_(); }

    // Uniform in the open interval (0, 1).
    double uniform_open();
    // Uniform in [lo, hi).
    double uniform(double lo, double hi);
    double normal();
    bool bernoulli(double p);
    // Standard Gumbel draw: -log(-log U).
    double gumbel();
    // Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound);

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_normal_ = false;
    double spare_normal_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace fairsad
