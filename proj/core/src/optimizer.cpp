#include "stan/optimizer.hpp"

#include <cmath>

namespace stan {

void adamw_step(ParamList& params, AdamState& state, double lr, double beta1, double beta2,
                double eps, double weight_decay) {
    ++state.step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (auto& [name, p] : params) {
        auto& mom = state.moments[name];
        if (mom.m.empty()) {
            mom.m.assign(p.size(), 0.0);
            mom.v.assign(p.size(), 0.0);
        }
        if (static_cast<int>(mom.m.size()) != p.size())
            throw ShapeError("adamw_step: moment shape mismatch for " + name);
        auto& vals = p.mutable_values();
        const auto& g = p.grad();
        for (int i = 0; i < p.size(); ++i) {
            vals[i] -= lr * weight_decay * vals[i];
            mom.m[i] = beta1 * mom.m[i] + (1.0 - beta1) * g[i];
            mom.v[i] = beta2 * mom.v[i] + (1.0 - beta2) * g[i] * g[i];
            const double mhat = mom.m[i] / bc1;
            const double vhat = mom.v[i] / bc2;
            vals[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

void zero_grads(ParamList& params) {
    for (auto& [name, p] : params) p.zero_grad();
}

double cosine_lr(double lr0, long step, long total_steps) {
    if (total_steps <= 1) return lr0;
    const double t = static_cast<double>(step) / static_cast<double>(total_steps - 1);
    return lr0 * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

} // namespace stan
