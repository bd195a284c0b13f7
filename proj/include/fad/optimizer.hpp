#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace fad {

// Adadelta accumulator state. Update rule per coordinate:
//   E[g^2]  <- rho * E[g^2] + (1 - rho) * g^2
//   dx      = -(sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps)) * g
//   E[dx^2] <- rho * E[dx^2] + (1 - rho) * dx^2
//   x       <- x + lr * dx
// where E[dx^2] on the second line is the value from before this step.
struct AdadeltaState {
    std::vector<double> avg_sq_grad;
    std::vector<double> avg_sq_update;
    double rho = 0.9;
    double eps = 1e-6;
    double lr = 1.0;

    explicit AdadeltaState(std::size_t dim = 0, double rho_ = 0.9, double eps_ = 1e-6,
                           double lr_ = 1.0)
        : avg_sq_grad(dim, 0.0), avg_sq_update(dim, 0.0), rho(rho_), eps(eps_), lr(lr_) {}
};

inline void adadelta_step(std::vector<double>& params, const std::vector<double>& grads,
                          AdadeltaState& state) {
    if (params.size() != grads.size() || params.size() != state.avg_sq_grad.size())
        throw std::invalid_argument("adadelta_step: dimension mismatch, params " +
                                    std::to_string(params.size()) + ", grads " +
                                    std::to_string(grads.size()) + ", state " +
                                    std::to_string(state.avg_sq_grad.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.avg_sq_grad[i] = state.rho * state.avg_sq_grad[i] + (1.0 - state.rho) * g * g;
        const double dx = -(std::sqrt(state.avg_sq_update[i] + state.eps) /
                            std::sqrt(state.avg_sq_grad[i] + state.eps)) *
                          g;
        state.avg_sq_update[i] = state.rho * state.avg_sq_update[i] + (1.0 - state.rho) * dx * dx;
        params[i] += state.lr * dx;
    }
}

}  // namespace fad
