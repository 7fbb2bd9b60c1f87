#include "fairsad/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace fairsad {

AdamState AdamState::for_parameters(std::span<Matrix* const> params, AdamOptions options) {
    AdamState state;
    state.options = options;
    for (const Matrix* p : params) {
        state.first_moment.emplace_back(p->rows(), p->cols());
        state.second_moment.emplace_back(p->rows(), p->cols());
    }
    return state;
}

void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
        throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
    }
    const AdamOptions& o = state.options;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(o.beta1, t);
    const double correction2 = 1.0 - std::pow(o.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Matrix& theta = *params[k];
        const Matrix& g = grads[k];
        Matrix& m = state.first_moment[k];
        Matrix& v = state.second_moment[k];
        if (!theta.same_shape(g) || !theta.same_shape(m)) {
            throw std::invalid_argument("adam_step: shape mismatch for parameter " +
                                        std::to_string(k) + ": " + theta.shape_string() +
                                        " vs grad " + g.shape_string());
        }
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
            v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            theta[i] -= o.lr * o.weight_decay * theta[i];
            theta[i] -= o.lr * m_hat / (std::sqrt(v_hat) + o.epsilon);
        }
    }
}

}  // namespace fairsad
