#include "fairsad/rng.hpp"

#include <cmath>
#include <numbers>

namespace fairsad {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng Rng::split(std::uint64_t stream) const {
    return Rng(splitmix64(splitmix64(seed_) ^ splitmix64(stream + 0x5851f42d4c957f2dULL)));
}

double Rng::uniform_open() {
    // 53 random bits, shifted half an ulp off zero.
    const std::uint64_t bits = engine_() >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

double Rng::normal() {
    if (has_spare_normal_) {
        has_spare_normal_ = false;
        return spare_normal_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform_open();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_normal_ = radius * std::sin(angle);
    has_spare_normal_ = true;
    return radius * std::cos(angle);
}

bool Rng::bernoulli(double p) {
    return uniform_open() < p;
}

double Rng::gumbel() {
    return -std::log(-std::log(uniform_open()));
}

std::uint64_t Rng::below(std::uint64_t bound) {
    // Rejection sampling to avoid modulo bias.
    const std::uint64_t limit = bound == 0 ? 0 : (~std::uint64_t{0} - bound + 1) % bound;
    for (;;) {
        const std::uint64_t r = engine_();
        if (r >= limit) {
            return r % bound;
        }
    }
}

}  // namespace fairsad
