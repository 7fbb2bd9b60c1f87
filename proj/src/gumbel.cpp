#include "fairsad/gumbel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fairsad {

Matrix gumbel_difference_noise(std::size_t dims, Rng& rng) {
    Matrix noise(1, dims);
    for (std::size_t i = 0; i < dims; ++i) {
        const double g0 = rng.gumbel();
        const double g1 = rng.gumbel();
        noise[i] = g1 - g0;
    }
    return noise;
}

Matrix gumbel_binary_sample(std::span<const double> keep_logits, double temperature, Rng& rng) {
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("gumbel_binary_sample: temperature must be positive, got " +
                                    std::to_string(temperature));
    }
    const Matrix noise = gumbel_difference_noise(keep_logits.size(), rng);
    Matrix sample(1, keep_logits.size());
    for (std::size_t i = 0; i < keep_logits.size(); ++i) {
        const double z = (keep_logits[i] + noise[i]) / temperature;
        sample[i] = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    }
    return sample;
}

}  // namespace fairsad
