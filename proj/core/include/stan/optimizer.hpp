#pragma once

#include <map>
#include <string>
#include <vector>

#include "stan/nn.hpp"

namespace stan {

struct AdamState {
    struct Moments {
        std::vector<double> m, v;
    };
    std::map<std::string, Moments> moments;
    long step = 0;
};

// Adam with bias correction and decoupled weight decay (p -= lr*wd*p applied
// before the moment update).
void adamw_step(ParamList& params, AdamState& state, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8, double weight_decay = 0.02);

void zero_grads(ParamList& params);

// lr(0) = lr0, lr(last) = 0 over [0, total_steps).
double cosine_lr(double lr0, long step, long total_steps);

} // namespace stan
