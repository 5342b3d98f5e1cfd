#include "stan/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace stan {

GradCheckReport grad_check(const std::function<Tensor()>& fn,
                           const std::vector<std::pair<std::string, Tensor>>& params, double eps,
                           double tol) {
    if (eps <= 0.0 || eps > 1e-3) throw ParamError("grad_check: eps must be in (0, 1e-3]");
    const double base = fn().item();
    if (fn().item() != base) throw ParamError("grad_check: fn is not deterministic");

    Tensor loss = fn();
    for (auto& [name, p] : params) const_cast<Tensor&>(p).zero_grad();
    loss.backward();

    GradCheckReport report;
    for (const auto& [name, param] : params) {
        Tensor p = param;
        GradCheckEntry entry;
        entry.name = name;
        const std::vector<double> analytic = p.grad();
        for (int i = 0; i < p.size(); ++i) {
            const double saved = p.mutable_values()[i];
            p.mutable_values()[i] = saved + eps;
            const double up = fn().item();
            p.mutable_values()[i] = saved - eps;
            const double down = fn().item();
            p.mutable_values()[i] = saved;
            const double fd = (up - down) / (2.0 * eps);
            const double ga = analytic[i];
            const double rel =
                std::abs(ga - fd) / std::max({std::abs(ga), std::abs(fd), 1e-8});
            entry.max_rel_err = std::max(entry.max_rel_err, rel);
        }
        entry.passed = entry.max_rel_err <= tol;
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.passed = report.passed && entry.passed;
        report.entries.push_back(std::move(entry));
    }
    return report;
}

} // namespace stan
