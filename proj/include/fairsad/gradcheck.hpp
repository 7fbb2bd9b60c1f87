#pragma once

#include <functional>
#include <span>

#include "fairsad/matrix.hpp"
#include "fairsad/tape.hpp"

namespace fairsad::ad {

inline constexpr double kDefaultFdStep = 1e-5;

// max over coordinates of |analytic - central| / (|central| + 1e-8).
double relative_gradient_error(const Matrix& analytic, const Matrix& central);

// Central differences of f around point, one coordinate at a time.
Matrix central_differences(const std::function<double(const Matrix&)>& f, const Matrix& point,
                           double step = kDefaultFdStep);

// Compares an analytic gradient against central differences of f.
double finite_difference_check(const std::function<double(const Matrix&)>& f,
                               const Matrix& analytic_gradient, const Matrix& point,
                               double step = kDefaultFdStep);

// Checks every listed leaf of a recorded tape: backprop once, then perturb each
// leaf coordinate, replay the tape, and difference the output. Leaf values are
// restored before returning.
double finite_difference_check(Tape& tape, NodeId output, std::span<const NodeId> leaves,
                               double step = kDefaultFdStep);

}  // namespace fairsad::ad
