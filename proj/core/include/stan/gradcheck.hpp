#pragma once

#include <functional>
#include <string>
#include <vector>

#include "stan/tensor.hpp"

namespace stan {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    bool passed = true;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    bool passed = true;
    double max_rel_err = 0.0;
};

// Central-difference comparison of reverse-mode gradients against the
// independent finite-difference oracle. fn must rebuild the scalar loss from
// the current parameter values on every call and be deterministic; a repeated
// baseline evaluation mismatch is reported as an error.
GradCheckReport grad_check(const std::function<Tensor()>& fn,
                           const std::vector<std::pair<std::string, Tensor>>& params,
                           double eps = 1e-5, double tol = 1e-4);

} // namespace stan
