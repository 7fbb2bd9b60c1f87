#include "fairsad/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fairsad::ad {

double relative_gradient_error(const Matrix& analytic, const Matrix& central) {
    if (!analytic.same_shape(central)) {
        throw std::invalid_argument("relative_gradient_error: " + analytic.shape_string() +
                                    " vs " + central.shape_string());
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double err = std::abs(analytic[i] - central[i]) / (std::abs(central[i]) + 1e-8);
        worst = std::max(worst, err);
    }
    return worst;
}

Matrix central_differences(const std::function<double(const Matrix&)>& f, const Matrix& point,
                           double step) {
    Matrix probe = point;
    Matrix grad(point.rows(), point.cols());
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double original = probe[i];
        probe[i] = original + step;
        const double up = f(probe);
        probe[i] = original - step;
        const double down = f(probe);
        probe[i] = original;
        grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

double finite_difference_check(const std::function<double(const Matrix&)>& f,
                               const Matrix& analytic_gradient, const Matrix& point, double step) {
    return relative_gradient_error(analytic_gradient, central_differences(f, point, step));
}

double finite_difference_check(Tape& tape, NodeId output, std::span<const NodeId> leaves,
                               double step) {
    const Gradients grads = tape.backprop(output);
    double worst = 0.0;
    for (const NodeId leaf : leaves) {
        const Matrix original = tape.value(leaf);
        const auto f = [&](const Matrix& x) {
            tape.set_value(leaf, x);
            tape.evaluate();
            return tape.scalar(output);
        };
        worst = std::max(worst, finite_difference_check(f, grads.of(leaf), original, step));
        tape.set_value(leaf, original);
    }
    tape.evaluate();
    return worst;
}

}  // namespace fairsad::ad
