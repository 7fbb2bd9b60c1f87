#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fairsad/matrix.hpp"

namespace fairsad {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 1e-5;
};

struct AdamState {
    AdamOptions options;
    std::vector<Matrix> first_moment;
    std::vector<Matrix> second_moment;
    std::uint64_t step = 0;

    // Zeroed accumulators shaped like the given parameters.
    static AdamState for_parameters(std::span<Matrix* const> params, AdamOptions options);
};

// Bias-corrected Adam with decoupled weight decay (theta -= lr * wd * theta
// before the moment update is applied).
void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state);

}  // namespace fairsad
