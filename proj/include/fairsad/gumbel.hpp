#pragma once

#include <span>

#include "fairsad/matrix.hpp"
#include "fairsad/rng.hpp"

namespace fairsad {

// One row of logistic noise g1 - g0 with g0, g1 independent standard Gumbel
// draws, one entry per mask dimension.
Matrix gumbel_difference_noise(std::size_t dims, Rng& rng);

// Binary-concrete relaxation of Bernoulli(sigmoid(logit)):
// sigmoid((logit + g1 - g0) / temperature), one independent draw per entry.
// Throws std::invalid_argument for a non-positive temperature.
Matrix gumbel_binary_sample(std::span<const double> keep_logits, double temperature, Rng& rng);

}  // namespace fairsad
